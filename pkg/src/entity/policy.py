"""
A K-stage stylization policy over an operation registry.

Each stage holds selection logits ``w``, normalized parameters ``mu01`` and
application-probability logits ``p_logit``, one entry per registry operation.
Training uses ``relaxed_forward`` (softmax mixture of softly gated operations);
inference uses ``stylize`` (one sampled operation per stage, applied with
probability sigmoid(p_logit)).
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.autodiff import Tensor, as_tensor, functional as F
from src.constants import (DEFAULT_TAU_GATE, DEFAULT_TAU_SELECT, POLICY_FORMAT_VERSION,
                           POLICY_INIT_LOGIT_RANGE, POLICY_INIT_MU01)
from src.entity.op_dictionary import OpRegistry, apply_hard, apply_smooth, default_registry
from src.exception import (MalformedDocumentError, PolicyValidationError, RegistryMismatchError,
                           ShapeMismatchError, VersionMismatchError)
from src.logger import logging

PARAMETER_NAMES: Tuple[str, ...] = ("w", "mu01", "p_logit")


@dataclass(frozen=True, eq=False)
class Stage:
    w: np.ndarray
    mu01: np.ndarray
    p_logit: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.p_logit.astype(np.float64)))


class PolicyLeaves(NamedTuple):
    """Graph leaves holding the stacked (K, N) policy parameters."""
    w: Tensor
    mu01: Tensor
    p_logit: Tensor

    def named(self) -> Dict[str, Tensor]:
        return dict(zip(PARAMETER_NAMES, self))


@dataclass(frozen=True, eq=False)
class PolicySummary:
    names: Tuple[str, ...]
    expected_count: np.ndarray
    expected_param: np.ndarray

    def to_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            "expected_count": {n: float(v) for n, v in zip(self.names, self.expected_count)},
            "expected_param": {n: float(v) for n, v in zip(self.names, self.expected_param)},
        }


def _softmax64(logits: np.ndarray, tau: float) -> np.ndarray:
    z = logits.astype(np.float64) / tau
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Policy:
    stages: Tuple[Stage, ...]
    registry: OpRegistry = field(default_factory=default_registry)
    tau_select: float = DEFAULT_TAU_SELECT
    tau_gate: float = DEFAULT_TAU_GATE

    def __post_init__(self):
        if len(self.stages) < 1:
            raise PolicyValidationError("a policy needs at least one stage", K=len(self.stages))
        if not (self.tau_select > 0 and self.tau_gate > 0):
            raise PolicyValidationError("temperatures must be positive",
                                        tau_select=self.tau_select, tau_gate=self.tau_gate)
        N = self.registry.N
        for k, stage in enumerate(self.stages):
            for name in PARAMETER_NAMES:
                values = getattr(stage, name)
                if values.shape != (N,):
                    raise PolicyValidationError(f"stage {k}: {name} must have length {N}",
                                                stage=k, field=name, shape=list(values.shape))
                if not np.all(np.isfinite(values)):
                    raise PolicyValidationError(f"stage {k}: {name} holds non-finite values", stage=k, field=name)
            if np.any(stage.mu01 < 0) or np.any(stage.mu01 > 1):
                raise PolicyValidationError(f"stage {k}: mu01 outside [0, 1]", stage=k)

    @property
    def K(self) -> int:
        return len(self.stages)

    @property
    def N(self) -> int:
        return self.registry.N

    def arrays(self) -> Dict[str, np.ndarray]:
        """Stacked (K, N) float32 copies of w, mu01 and p_logit."""
        return {name: np.stack([getattr(s, name) for s in self.stages]).astype(np.float32)
                for name in PARAMETER_NAMES}

    def with_arrays(self, w: np.ndarray, mu01: np.ndarray, p_logit: np.ndarray) -> "Policy":
        stages = tuple(
            Stage(np.array(w[k], dtype=np.float32),
                  np.clip(np.array(mu01[k], dtype=np.float32), 0.0, 1.0),
                  np.array(p_logit[k], dtype=np.float32))
            for k in range(len(w))
        )
        return replace(self, stages=stages)

    def with_temperatures(self, tau_select: float, tau_gate: float) -> "Policy":
        return replace(self, tau_select=float(tau_select), tau_gate=float(tau_gate))

    def leaves(self, requires_grad: bool = True) -> PolicyLeaves:
        arrays = self.arrays()
        return PolicyLeaves(*(Tensor(arrays[name], requires_grad=requires_grad) for name in PARAMETER_NAMES))

    def select_probs(self) -> np.ndarray:
        """(K, N) float64 softmax(w_k / tau_select)."""
        return _softmax64(self.arrays()["w"], self.tau_select)

    def sub_policy(self, k: int) -> "Policy":
        return replace(self, stages=(self.stages[k],))


def init_policy(K: int, registry: Optional[OpRegistry] = None, seed: int = 0,
                tau_select: float = DEFAULT_TAU_SELECT, tau_gate: float = DEFAULT_TAU_GATE) -> Policy:
    if K < 1:
        raise PolicyValidationError(f"K must be at least 1, got {K}", K=K)
    registry = registry or default_registry()
    rng = np.random.default_rng(seed)
    N = registry.N
    w = rng.uniform(-POLICY_INIT_LOGIT_RANGE, POLICY_INIT_LOGIT_RANGE, size=(K, N)).astype(np.float32)
    stages = tuple(Stage(w[k], np.full(N, POLICY_INIT_MU01, dtype=np.float32), np.zeros(N, dtype=np.float32))
                   for k in range(K))
    logging.debug(f"Initialised policy with K={K}, N={N}, seed={seed}")
    return Policy(stages, registry, float(tau_select), float(tau_gate))


def deterministic_policy(choices: Sequence[Tuple[str, Optional[float]]],
                         registry: Optional[OpRegistry] = None,
                         margin: float = 40.0,
                         p_logit: float = 40.0) -> Policy:
    """
    Builds a saturated policy: stage k selects ``choices[k][0]`` with logit margin
    ``margin`` and applies it with gate logit ``p_logit``; ``choices[k][1]`` is the
    normalized parameter (ignored for no-param ops).
    """
    registry = registry or default_registry()
    N = registry.N
    stages = []
    for name, mu01 in choices:
        n = registry.index(name)
        w = np.zeros(N, dtype=np.float32)
        w[n] = margin
        mu = np.full(N, POLICY_INIT_MU01, dtype=np.float32)
        if mu01 is not None:
            mu[n] = mu01
        stages.append(Stage(w, mu, np.full(N, p_logit, dtype=np.float32)))
    return Policy(tuple(stages), registry)


def _gate_shape(lead: Tuple[int, ...]) -> Tuple[int, ...]:
    return lead + (1, 1, 1)


def relaxed_forward(policy: Policy, x, noise: np.random.Generator,
                    leaves: Optional[PolicyLeaves] = None) -> Tensor:
    """
    Differentiable stylization of ``x`` shaped (3, H, W) or (B, 3, H, W).

    Each image draws its own logistic gate noise per stage and op. Gradients flow
    to ``leaves`` (by default, constant leaves built from the policy).
    """
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-3] != 3:
        raise ShapeMismatchError(f"relaxed_forward expects (3, H, W) or (B, 3, H, W), got {x.shape}",
                                 node=x.id, shapes=[list(x.shape)])
    leaves = leaves or policy.leaves(requires_grad=False)
    lead = x.shape[:-3]
    registry = policy.registry
    N = registry.N

    for k in range(policy.K):
        probs = F.softmax(leaves.w[k] * (1.0 / policy.tau_select))
        logistic = noise.logistic(0.0, 1.0, size=(N,) + lead)
        mixed = None
        for op in registry:
            n = op.op_id
            out = apply_smooth(n, x, leaves.mu01[k, n] if op.has_param else None, registry)
            gate = F.sigmoid((leaves.p_logit[k, n] + logistic[n]) * (1.0 / policy.tau_gate))
            if lead:
                gate = F.reshape(gate, _gate_shape(lead))
            gated = gate * out + (1.0 - gate) * x
            term = probs[n] * gated
            mixed = term if mixed is None else mixed + term
        x = mixed
    return x


def stylize(policy: Policy, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Hard stylization of one image shaped (3, H, W); consumes two uniforms per stage."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeMismatchError(f"stylize expects one image shaped (3, H, W), got {x.shape}",
                                 shapes=[list(x.shape)])
    probs = policy.select_probs()
    for k, stage in enumerate(policy.stages):
        cumulative = np.cumsum(probs[k])
        n = int(min(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"), policy.N - 1))
        if rng.random() < stage.p[n]:
            x = apply_hard(n, x, float(stage.mu01[n]), policy.registry).numpy()
    return x


def stylize_batch(policy: Policy, images: Sequence[np.ndarray], seeds: Sequence[int], workers: int = 1) -> np.ndarray:
    """Hard-stylizes each image with its own random stream; output order follows the input."""
    if len(images) != len(seeds):
        raise ShapeMismatchError("one seed per image is required", shapes=[[len(images)], [len(seeds)]])

    def run(item):
        image, seed = item
        return stylize(policy, image, np.random.default_rng(seed))

    if workers <= 1:
        return np.stack([run(item) for item in zip(images, seeds)])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.stack(list(pool.map(run, zip(images, seeds))))


def summary(policy: Policy) -> PolicySummary:
    probs = policy.select_probs()
    mu01 = policy.arrays()["mu01"].astype(np.float64)
    expected_count = probs.sum(axis=0)
    expected_param = (probs * mu01).sum(axis=0)
    expected_param[~policy.registry.param_mask()] = 0.0
    return PolicySummary(policy.registry.names, expected_count, expected_param)


def to_document(policy: Policy) -> dict:
    return {
        "version": POLICY_FORMAT_VERSION,
        "registry": list(policy.registry.names),
        "tau_select": float(policy.tau_select),
        "tau_gate": float(policy.tau_gate),
        "stages": [{name: [float(v) for v in getattr(stage, name)] for name in PARAMETER_NAMES}
                   for stage in policy.stages],
    }


def serialize(policy: Policy) -> bytes:
    return (json.dumps(to_document(policy), sort_keys=True, indent=2) + "\n").encode("utf-8")


def _vector(stage: dict, name: str, k: int) -> np.ndarray:
    values = stage.get(name)
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                               for v in values):
        raise MalformedDocumentError(f"stage {k}: {name} must be a list of numbers", stage=k, field=name)
    return np.array(values, dtype=np.float32)


def from_document(document: dict, registry: Optional[OpRegistry] = None) -> Policy:
    registry = registry or default_registry()
    if not isinstance(document, dict):
        raise MalformedDocumentError("a policy document must be a JSON object")
    missing = [key for key in ("version", "registry", "tau_select", "tau_gate", "stages") if key not in document]
    if missing:
        raise MalformedDocumentError(f"policy document lacks {missing}", missing=missing)
    if type(document["version"]) is not int:
        raise MalformedDocumentError("version must be an integer", found=repr(document["version"]))
    if document["version"] != POLICY_FORMAT_VERSION:
        raise VersionMismatchError(f"policy format version {document['version']} is not supported",
                                   found=document["version"], expected=POLICY_FORMAT_VERSION)
    if list(document["registry"]) != list(registry.names):
        raise RegistryMismatchError("policy registry does not match the operation dictionary",
                                    found=document["registry"], expected=list(registry.names))
    if not isinstance(document["stages"], list):
        raise MalformedDocumentError("stages must be a list")
    if not document["stages"]:
        raise PolicyValidationError("a policy needs at least one stage", K=0)
    try:
        tau_select, tau_gate = float(document["tau_select"]), float(document["tau_gate"])
    except (TypeError, ValueError):
        raise MalformedDocumentError("temperatures must be numbers") from None
    stages: List[Stage] = []
    for k, stage in enumerate(document["stages"]):
        if not isinstance(stage, dict):
            raise MalformedDocumentError(f"stage {k} must be an object", stage=k)
        stages.append(Stage(*(_vector(stage, name, k) for name in PARAMETER_NAMES)))
    return Policy(tuple(stages), registry, tau_select, tau_gate)


def deserialize(data: bytes, registry: Optional[OpRegistry] = None) -> Policy:
    try:
        document = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedDocumentError(f"policy document is not valid UTF-8 JSON: {e}") from None
    return from_document(document, registry)


def save_policy(policy: Policy, path: str) -> None:
    with open(path, "wb") as file_obj:
        file_obj.write(serialize(policy))
    logging.info(f"Policy saved to {path}")


def load_policy(path: str, registry: Optional[OpRegistry] = None) -> Policy:
    with open(path, "rb") as file_obj:
        return deserialize(file_obj.read(), registry)
