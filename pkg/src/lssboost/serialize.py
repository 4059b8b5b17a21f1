"""Versioned JSON model files.

Trees are stored as nested nodes that name their split feature, so a model
can score data whose columns come in a different order.
"""
import json
import math

import numpy as np

from .errors import SchemaError
from .families import family_from_dict
from .trainer import LssModel, TrainConfig
from .tree import Ensemble, Tree

FORMAT_VERSION = 1


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _node_to_dict(tree, node, names):
    if tree.is_leaf(node):
        return {"leaf": tree.value[node], "cover": tree.cover[node]}
    return {
        "feature": names[tree.feature[node]],
        "threshold": tree.threshold[node],
        "missing": "left" if tree.missing_left[node] else "right",
        "gain": tree.gain[node],
        "cover": tree.cover[node],
        "left": _node_to_dict(tree, tree.left[node], names),
        "right": _node_to_dict(tree, tree.right[node], names),
    }


def model_to_dict(model):
    names = model.feature_names
    return {
        "format_version": FORMAT_VERSION,
        "family": model.family.to_dict(),
        "param_names": list(model.family.param_names),
        "links": [lk.kind for lk in model.family.links],
        "offsets": [float(v) for v in model.offsets],
        "feature_names": list(names),
        "ensembles": [
            {
                "param": p,
                "eta": e.eta,
                "base_offset": e.base_offset,
                "trees": [_node_to_dict(t, 0, names) for t in e.trees],
            }
            for p, e in zip(model.family.param_names, model.ensembles)
        ],
        "step2_rounds_used": model.step2_rounds_used,
        "deviance_trace": _clean(model.deviance_trace),
        "config": _clean(model.config.to_dict()),
        "metadata": _clean(model.metadata),
    }


def _get(doc, key, path, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing key {key!r}", path)
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"expected {getattr(kind, '__name__', kind)}", f"{path}.{key}")
    return val


def _num(doc, key, path):
    val = _get(doc, key, path)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError("expected a number", f"{path}.{key}")
    return float(val)


def _node_from_dict(doc, tree, index, path):
    node = tree._new_node()
    if not isinstance(doc, dict):
        raise SchemaError("expected a tree node object", path)
    tree.cover[node] = _num(doc, "cover", path) if "cover" in doc else 0.0
    if "leaf" in doc:
        tree.value[node] = _num(doc, "leaf", path)
        return node
    feat = _get(doc, "feature", path, str)
    if feat not in index:
        raise SchemaError(f"unknown feature {feat!r}", f"{path}.feature")
    tree.feature[node] = index[feat]
    tree.threshold[node] = _num(doc, "threshold", path)
    missing = _get(doc, "missing", path, str)
    if missing not in ("left", "right"):
        raise SchemaError("missing must be 'left' or 'right'", f"{path}.missing")
    tree.missing_left[node] = missing == "left"
    tree.gain[node] = _num(doc, "gain", path) if "gain" in doc else 0.0
    left = _node_from_dict(_get(doc, "left", path), tree, index, f"{path}.left")
    right = _node_from_dict(_get(doc, "right", path), tree, index, f"{path}.right")
    tree.left[node], tree.right[node] = left, right
    return node


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be an object")
    version = _get(doc, "format_version", "$", int)
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {version} (this build reads {FORMAT_VERSION})",
                          "$.format_version")
    family = family_from_dict(_get(doc, "family", "$", dict))
    param_names = _get(doc, "param_names", "$", list)
    if list(param_names) != list(family.param_names):
        raise SchemaError("param_names do not match the family", "$.param_names")
    links = _get(doc, "links", "$", list)
    if links != [lk.kind for lk in family.links]:
        raise SchemaError("links do not match the family", "$.links")
    names = _get(doc, "feature_names", "$", list)
    index = {n: i for i, n in enumerate(names)}
    offsets = _get(doc, "offsets", "$", list)
    ens_docs = _get(doc, "ensembles", "$", list)
    if len(ens_docs) != family.n_params or len(offsets) != family.n_params:
        raise SchemaError("need one ensemble and one offset per parameter", "$.ensembles")
    ensembles = []
    for k, ed in enumerate(ens_docs):
        path = f"$.ensembles[{k}]"
        ens = Ensemble(eta=_num(ed, "eta", path), base_offset=_num(ed, "base_offset", path),
                       n_features=len(names))
        for t, td in enumerate(_get(ed, "trees", path, list)):
            tree = Tree()
            _node_from_dict(td, tree, index, f"{path}.trees[{t}]")
            ens.trees.append(tree)
        ensembles.append(ens)
    config = doc.get("config")
    try:
        config = TrainConfig.from_dict(config) if config else TrainConfig()
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid config: {exc}", "$.config") from None
    trace = [math.inf if v is None else float(v) for v in doc.get("deviance_trace", [])]
    return LssModel(
        family=family, ensembles=ensembles, offsets=np.asarray(offsets, dtype=float),
        feature_names=list(names), config=config,
        step2_rounds_used=int(doc.get("step2_rounds_used", 0)),
        deviance_trace=trace, metadata=dict(doc.get("metadata", {})),
    )


def dumps(model):
    return json.dumps(model_to_dict(model), indent=1, allow_nan=False)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg} at line {exc.lineno}") from None
    return model_from_dict(doc)
