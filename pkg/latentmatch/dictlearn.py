#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Per-image dictionary learning (online, batch size 1) and OMP sparse coding."""

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from . import constants, log
from .batch import BatchRequest, batch_run, chunked
from .constants import CodingMode
from .exceptions import (
    ConfigError,
    DegenerateDataError,
    DictionaryFormatError,
    InsufficientDataError,
    InvalidArgument,
)
from .imagecore import PatchVector, patches_matrix

PatchInput = Union[Sequence[PatchVector], np.ndarray]
HEADER = struct.Struct("<II")
UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    n_atoms: int = constants.N_ATOMS
    sparsity: int = constants.SPARSITY
    epochs: int = constants.EPOCHS
    lam: float = constants.LAMBDA
    seed: int = constants.SEED
    forget_rate: float = constants.FORGET_RATE
    coding: CodingMode = CodingMode.omp

    def __post_init__(self):
        try:
            object.__setattr__(self, "coding", CodingMode(self.coding))
        except ValueError:
            raise ConfigError(f"coding must be one of {', '.join(m.value for m in CodingMode)}, got {self.coding!r}")
        if not 1 <= self.sparsity <= self.n_atoms:
            raise ConfigError(f"need n_atoms >= sparsity >= 1, got n_atoms={self.n_atoms} sparsity={self.sparsity}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lam > 0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        if self.forget_rate < 0:
            raise ConfigError(f"forget_rate must be >= 0, got {self.forget_rate}")


@dataclass(eq=False)
class Dictionary:
    """Nₛ×Nₐ matrix of unit-norm atoms, one atom per column.

    ``labels`` holds one byte per atom (1 ridge-valley, 0 not, 0xFF unlabeled).
    ``error_history`` is only filled in by :func:`learn_dictionary`.
    """
    atoms: np.ndarray
    trained_on: str = ""
    labels: np.ndarray = None
    error_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or min(atoms.shape) < 1:
            raise InvalidArgument(f"dictionary atoms must be a non-empty 2-D matrix, got shape {atoms.shape}")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise InvalidArgument(f"atom {bad} has norm {norms[bad]:.12g}, atoms must be unit norm")
        atoms.setflags(write=False)
        self.atoms = atoms
        if self.labels is None:
            self.labels = np.full(atoms.shape[1], constants.LABEL_UNLABELED, dtype=np.uint8)
        else:
            labels = np.asarray(self.labels, dtype=np.uint8).ravel()
            if labels.size != atoms.shape[1]:
                raise InvalidArgument(f"{labels.size} labels for {atoms.shape[1]} atoms")
            self.labels = labels

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dictionary):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.labels, other.labels)

    def __repr__(self) -> str:
        return f"Dictionary({self.atom_dim}x{self.atom_count}, ridge={self.ridge_count}, trained_on={self.trained_on!r})"

    @property
    def atom_dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def atom_count(self) -> int:
        return self.atoms.shape[1]

    @property
    def side(self) -> int:
        w = int(round(np.sqrt(self.atom_dim)))
        if w * w != self.atom_dim:
            raise InvalidArgument(f"atom dimension {self.atom_dim} is not a square patch")
        return w

    @property
    def is_labeled(self) -> bool:
        return not np.any(self.labels == constants.LABEL_UNLABELED)

    @property
    def ridge_mask(self) -> np.ndarray:
        return self.labels == constants.LABEL_RIDGE

    @property
    def ridge_count(self) -> int:
        return int(np.count_nonzero(self.ridge_mask))

    def with_labels(self, labels: Sequence[int]) -> "Dictionary":
        return replace(self, labels=np.asarray(labels, dtype=np.uint8), error_history=list(self.error_history))


@dataclass(frozen=True, eq=False)
class SparseCode:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if idx.size != vals.size:
            raise InvalidArgument(f"{idx.size} indices but {vals.size} values")
        if idx.size and (np.any(np.diff(idx) <= 0)):
            raise InvalidArgument("sparse code indices must be strictly increasing")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.dim):
            raise InvalidArgument(f"sparse code index out of range for dimension {self.dim}")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseCode):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def empty(cls, dim: int) -> "SparseCode":
        return cls(indices=np.zeros(0, dtype=np.int64), values=np.zeros(0), dim=dim)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dominant(self) -> int:
        """Index of the largest-magnitude coefficient (lowest index on ties), -1 when empty."""
        if not len(self):
            return -1
        return int(self.indices[int(np.argmax(np.abs(self.values)))])


# -- // coding \\ --
def _vector(s: Union[PatchVector, np.ndarray]) -> np.ndarray:
    return s.values if isinstance(s, PatchVector) else np.asarray(s, dtype=np.float64).ravel()


def _as_matrix(patches: PatchInput) -> np.ndarray:
    if isinstance(patches, np.ndarray):
        if patches.ndim != 2:
            raise InvalidArgument(f"patch matrix must be 2-D, got shape {patches.shape}")
        return np.asarray(patches, dtype=np.float64)
    return patches_matrix(list(patches))


def _omp(atoms: np.ndarray, s: np.ndarray, K: int) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    residual = s.copy()
    norms = [float(np.linalg.norm(residual))]
    support: List[int] = []
    coef = np.zeros(0)
    if norms[0] < constants.OMP_TOL:
        return np.zeros(0, dtype=np.int64), coef, norms

    for _ in range(K):
        corr = np.abs(atoms.T @ residual)
        corr[support] = -1.0
        j = int(np.argmax(corr))  # first maximum, so ties go to the lowest index
        if corr[j] <= 0.0:
            break
        support.append(j)
        sub = atoms[:, support]
        coef, *_ = np.linalg.lstsq(sub, s, rcond=None)
        residual = s - sub @ coef
        norms.append(float(np.linalg.norm(residual)))
        if norms[-1] < constants.OMP_TOL:
            break

    order = np.argsort(support)
    return np.asarray(support, dtype=np.int64)[order], np.asarray(coef)[order], norms


def _check_code_args(D: Dictionary, s: np.ndarray, K: int) -> None:
    if s.size != D.atom_dim:
        raise InvalidArgument(f"patch dimension {s.size} does not match atom dimension {D.atom_dim}")
    if not 1 <= K <= D.atom_count:
        raise InvalidArgument(f"sparsity K={K} outside [1, {D.atom_count}]")


def omp_encode(D: Dictionary, s: Union[PatchVector, np.ndarray], K: int) -> SparseCode:
    """Greedy K-sparse code of ``s`` by orthogonal matching pursuit."""
    code, _ = omp_path(D, s, K)
    return code


def omp_path(D: Dictionary, s: Union[PatchVector, np.ndarray], K: int) -> Tuple[SparseCode, List[float]]:
    """Like :func:`omp_encode` but also returns the residual norm after every iteration."""
    x = _vector(s)
    _check_code_args(D, x, K)
    idx, vals, norms = _omp(D.atoms, x, K)
    return SparseCode(indices=idx, values=vals, dim=D.atom_count), norms


def _lasso(atoms: np.ndarray, x: np.ndarray, lam: float, K: int = None) -> Tuple[np.ndarray, np.ndarray]:
    from sklearn.linear_model import Lasso

    if np.linalg.norm(x) < constants.OMP_TOL:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    # sklearn scales the data term by 1/n_samples
    model = Lasso(alpha=lam / atoms.shape[0], fit_intercept=False, max_iter=5000, tol=1e-8)
    model.fit(atoms, x)
    coef = model.coef_
    nz = np.flatnonzero(coef)
    if K is not None and nz.size > K:
        keep = np.argsort(-np.abs(coef[nz]), kind="stable")[:K]
        nz = np.sort(nz[keep])
    return nz.astype(np.int64), coef[nz]


def lasso_encode(D: Dictionary, s: Union[PatchVector, np.ndarray], lam: float, K: int = None) -> SparseCode:
    """ℓ₁-regularized code, minimizing ½‖s − Dγ‖² + λ‖γ‖₁, keeping at most K nonzeros."""
    x = _vector(s)
    _check_code_args(D, x, K or 1)
    idx, vals = _lasso(D.atoms, x, lam, K)
    return SparseCode(indices=idx, values=vals, dim=D.atom_count)


def reconstruct(D: Dictionary, code: SparseCode) -> PatchVector:
    if code.dim != D.atom_count:
        raise InvalidArgument(f"code dimension {code.dim} does not match {D.atom_count} atoms")
    if len(code) and code.indices[-1] >= D.atom_count:
        raise InvalidArgument(f"atom index {code.indices[-1]} out of range")
    return PatchVector(values=D.atoms[:, code.indices] @ code.values)


def _coder(cfg: TrainConfig) -> Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    if cfg.coding is CodingMode.lasso:
        return lambda atoms, x: _lasso(atoms, x, cfg.lam, K=cfg.sparsity)
    return lambda atoms, x: _omp(atoms, x, cfg.sparsity)[:2]


def _encode_block(D: Dictionary, X: np.ndarray, K: int, coding: CodingMode, lam: float) -> List[SparseCode]:
    if coding is CodingMode.lasso:
        return [lasso_encode(D, X[:, i], lam, K=K) for i in range(X.shape[1])]
    return [omp_encode(D, X[:, i], K) for i in range(X.shape[1])]


def encode_patches(
    D: Dictionary,
    patches: PatchInput,
    K: int,
    threads: int = 1,
    coding: CodingMode = CodingMode.omp,
    lam: float = constants.LAMBDA,
) -> List[SparseCode]:
    """Sparse codes for every patch, in patch order."""
    X = _as_matrix(patches)
    if X.size == 0:
        return []
    coding = CodingMode(coding)
    reqs = [
        BatchRequest(_encode_block, (D, X[:, sl], K, coding, lam))
        for sl in chunked(X.shape[1], max(1, threads) * 4)
    ]
    return [code for block in batch_run(reqs, threads=threads) for code in block]


def _errors(D: Dictionary, X: np.ndarray, K: int) -> np.ndarray:
    out = np.empty(X.shape[1])
    for i in range(X.shape[1]):
        idx, vals, _ = _omp(D.atoms, X[:, i], K)
        r = X[:, i] - D.atoms[:, idx] @ vals
        out[i] = float(r @ r)
    return out


def mean_reconstruction_error(D: Dictionary, patches: PatchInput, K: int) -> float:
    """(1/N) Σ‖sᵢ − Dγᵢ‖² with K-sparse OMP codes."""
    X = _as_matrix(patches)
    if X.shape[0] != D.atom_dim:
        raise InvalidArgument(f"patch dimension {X.shape[0]} does not match atom dimension {D.atom_dim}")
    if X.shape[1] == 0:
        return 0.0
    return float(_errors(D, X, K).mean())


# -- // training \\ --
def _check_training_set(X: np.ndarray, n_atoms: int) -> np.ndarray:
    if X.shape[1] < n_atoms:
        raise InsufficientDataError(f"{X.shape[1]} training patches for {n_atoms} atoms")
    nonzero = np.linalg.norm(X, axis=0) > constants.OMP_TOL
    if not nonzero.any():
        raise DegenerateDataError("training set has zero variance (every patch is zero)")
    return nonzero


def init_dictionary(patches: PatchInput, n_atoms: int, seed: int = constants.SEED, trained_on: str = "") -> Dictionary:
    """Nₐ distinct non-zero training patches, sampled without replacement and scaled to unit norm."""
    X = _as_matrix(patches)
    nonzero = _check_training_set(X, n_atoms)
    rng = np.random.default_rng(seed)
    order = [int(i) for i in rng.permutation(X.shape[1]) if nonzero[i]][:n_atoms]
    atoms = X[:, order] / np.linalg.norm(X[:, order], axis=0)
    if len(order) < n_atoms:
        missing = n_atoms - len(order)
        log.warning(f"only {len(order)} non-zero patches for {n_atoms} atoms, {missing} atoms start random")
        extra = rng.standard_normal((X.shape[0], missing))
        atoms = np.hstack([atoms, extra / np.linalg.norm(extra, axis=0)])
    return Dictionary(atoms=atoms, trained_on=trained_on)


def _update_columns(D: np.ndarray, A: np.ndarray, B: np.ndarray, cols) -> None:
    """Block-coordinate step on the selected columns, projected back to the unit sphere."""
    for j in cols:
        ajj = A[j, j]
        if ajj <= 1e-12:
            continue
        u = (B[:, j] - D @ A[:, j]) / ajj + D[:, j]
        n = np.linalg.norm(u)
        if n > 1e-12:
            D[:, j] = u / n


def _replace_unused(D: np.ndarray, A: np.ndarray, B: np.ndarray, unused: np.ndarray, X: np.ndarray, errors: np.ndarray):
    worst = [int(i) for i in np.argsort(-errors, kind="stable") if errors[i] > 0][:unused.size]
    for k, i in zip(unused, worst):
        D[:, k] = X[:, i] / np.linalg.norm(X[:, i])
        A[k, :] = A[:, k] = 0.0
        B[:, k] = 0.0
    return len(worst)


def learn_dictionary(patches: PatchInput, cfg: TrainConfig, trained_on: str = "") -> Dictionary:
    """Online dictionary learning with one sample per update.

    Codes every sample against the current dictionary, folds it into the
    running statistics A = Σβγγᵀ and B = Σβsγᵀ, then updates the atoms the
    code used.  Each epoch ends with a full sweep over all atoms and the
    replacement of atoms no sample selected, kept only when it does not raise
    the mean reconstruction error.
    """
    X = _as_matrix(patches)
    init = init_dictionary(X, cfg.n_atoms, seed=cfg.seed, trained_on=trained_on)
    nonzero = np.flatnonzero(np.linalg.norm(X, axis=0) > constants.OMP_TOL)
    D = np.array(init.atoms)
    n_atoms, K = cfg.n_atoms, cfg.sparsity
    A = np.zeros((n_atoms, n_atoms))
    B = np.zeros((X.shape[0], n_atoms))
    code = _coder(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))

    errors = _errors(init, X, K)
    history = [float(errors.mean())]
    log.debug(f"learn_dictionary: {X.shape[1]} patches, {n_atoms} atoms, K={K}, initial error {history[0]:.6g}")
    t = 0
    for epoch in range(cfg.epochs):
        usage = np.zeros(n_atoms, dtype=np.int64)
        for i in rng.permutation(nonzero):
            x = X[:, i]
            idx, vals = code(D, x)
            if not idx.size:
                continue
            t += 1
            beta = (1.0 - 1.0 / t) ** cfg.forget_rate
            A *= beta
            B *= beta
            g = np.zeros(n_atoms)
            g[idx] = vals
            A += np.outer(g, g)
            B += np.outer(x, g)
            usage[idx] += 1
            _update_columns(D, A, B, idx)

        _update_columns(D, A, B, range(n_atoms))
        swept = Dictionary(atoms=D)
        errors = _errors(swept, X, K)
        unused = np.flatnonzero(usage == 0)
        if unused.size:
            trial_D, trial_A, trial_B = D.copy(), A.copy(), B.copy()
            n = _replace_unused(trial_D, trial_A, trial_B, unused, X, errors)
            trial = Dictionary(atoms=trial_D)
            trial_errors = _errors(trial, X, K)
            if trial_errors.mean() <= errors.mean():
                log.warning(f"epoch {epoch + 1}: re-seeded {n} unused atom(s) with worst-fit patches", show=False)
                D, A, B, errors = trial_D, trial_A, trial_B, trial_errors
        history.append(float(errors.mean()))
        log.debug(f"learn_dictionary: epoch {epoch + 1}/{cfg.epochs} error {history[-1]:.6g}")

    return Dictionary(atoms=D, trained_on=trained_on, error_history=history)


# -- // container \\ --
def dictionary_bytes(D: Dictionary) -> bytes:
    body = np.asarray(D.atoms, dtype="<f8").tobytes(order="F")
    return constants.DICT_MAGIC + HEADER.pack(D.atom_dim, D.atom_count) + body + D.labels.astype(np.uint8).tobytes()


def parse_dictionary(data: bytes, name: str = "") -> Dictionary:
    magic = constants.DICT_MAGIC
    if data[:len(magic)] != magic:
        raise DictionaryFormatError(f"{name or 'dictionary'}: bad magic {data[:len(magic)]!r}")
    if len(data) < len(magic) + HEADER.size:
        raise DictionaryFormatError(f"{name or 'dictionary'}: truncated header")
    ns, na = HEADER.unpack_from(data, len(magic))
    start = len(magic) + HEADER.size
    expected = start + 8 * ns * na + na
    if ns < 1 or na < 1 or len(data) != expected:
        raise DictionaryFormatError(f"{name or 'dictionary'}: {len(data)} bytes, expected {expected} for {ns}x{na}")
    atoms = np.frombuffer(data, dtype="<f8", count=ns * na, offset=start).reshape((ns, na), order="F")
    labels = np.frombuffer(data, dtype=np.uint8, count=na, offset=start + 8 * ns * na)
    valid = (constants.LABEL_NOT_RIDGE, constants.LABEL_RIDGE, constants.LABEL_UNLABELED)
    if not np.all(np.isin(labels, valid)):
        raise DictionaryFormatError(f"{name or 'dictionary'}: invalid atom label byte")
    try:
        return Dictionary(atoms=atoms, trained_on=name, labels=labels.copy())
    except InvalidArgument as e:
        raise DictionaryFormatError(f"{name or 'dictionary'}: {e}")


def save_dictionary(D: Dictionary, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dictionary_bytes(D))


def load_dictionary(path: Union[str, Path]) -> Dictionary:
    path = Path(path)
    return parse_dictionary(path.read_bytes(), name=path.stem)
