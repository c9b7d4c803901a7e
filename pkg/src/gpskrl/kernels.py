"""Gaussian kernels, linear-dependence sparsification and multikernel features.

The dictionary is a set of representative samples selected online: a candidate
is admitted only when the squared residual of projecting its kernel-space
image onto the span of the current dictionary exceeds a threshold. The same
dictionary then anchors the multikernel feature vector used by the actor and
critic, and (separately) the inducing set of the sparse GP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GRAM_JITTER = 1e-10
INVERSE_TOL = 1e-8


class IllConditionedError(RuntimeError):
    """Gram matrix inverse could not be maintained to tolerance."""


class EmptyDictionaryError(ValueError):
    """Feature evaluation requires a non-empty dictionary."""


@dataclass(frozen=True)
class KernelConfig:
    """Kernel widths for features and dictionary, plus admission threshold.

    widths: kernel widths of the multikernel feature blocks.
    dict_width: width used for dictionary construction and admission.
    ald_threshold: minimum projection residual for admitting a sample.
    max_elements: optional hard cap on dictionary size.
    """

    widths: tuple = (0.7, 0.8, 0.9, 1.0)
    dict_width: float = 0.9
    ald_threshold: float = 0.3
    max_elements: int | None = None

    def __post_init__(self):
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("widths must be non-empty and positive")
        if self.dict_width <= 0 or self.ald_threshold <= 0:
            raise ValueError("dict_width and ald_threshold must be positive")

    @property
    def n_widths(self) -> int:
        return len(self.widths)


def gaussian_kernel(a, b, width: float):
    """exp(-||a - b||^2 / width^2) for single vectors."""
    if width <= 0:
        raise ValueError("width must be positive")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.exp(-np.dot(d, d) / width ** 2))


def kernel_matrix(A: np.ndarray, B: np.ndarray, width: float) -> np.ndarray:
    """Pairwise Gaussian kernel between rows of A (n,d) and B (m,d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / width ** 2)


class Dictionary:
    """Ordered set of admitted samples with a cached Gram inverse.

    The Gram matrix (under `width`, with a small diagonal jitter) and its
    inverse are maintained incrementally by rank-one block updates, so
    streaming admission costs O(n^2) per sample.
    """

    def __init__(self, dim: int, width: float):
        self.dim = dim
        self.width = width
        self._elements = np.empty((0, dim))
        self._gram = np.empty((0, 0))
        self._gram_inv = np.empty((0, 0))

    def __len__(self):
        return len(self._elements)

    @property
    def elements(self) -> np.ndarray:
        return self._elements

    @property
    def gram(self) -> np.ndarray:
        return self._gram

    @property
    def gram_inv(self) -> np.ndarray:
        return self._gram_inv

    def kernel_to(self, z: np.ndarray) -> np.ndarray:
        """Kernel values between z and every element, under the dictionary width."""
        if len(self) == 0:
            return np.empty(0)
        return kernel_matrix(z[None, :], self._elements, self.width)[0]

    def ald_distance(self, z: np.ndarray):
        """Projection residual of z onto the dictionary span: (delta, coeffs).

        delta = k(z,z) - k_z^T K^{-1} k_z, coeffs = K^{-1} k_z. An empty
        dictionary returns the kernel self-value (1 for the Gaussian kernel).
        """
        z = np.asarray(z, dtype=float)
        if len(self) == 0:
            return 1.0, np.empty(0)
        k = self.kernel_to(z)
        coeffs = self._gram_inv @ k
        delta = 1.0 - float(k @ coeffs)
        return max(delta, 0.0), coeffs

    def add(self, z: np.ndarray):
        """Insert z, updating the Gram matrix and its inverse in place."""
        z = np.asarray(z, dtype=float)
        n = len(self)
        if n == 0:
            self._elements = z[None, :].copy()
            g = 1.0 + GRAM_JITTER
            self._gram = np.array([[g]])
            self._gram_inv = np.array([[1.0 / g]])
            return
        k = self.kernel_to(z)
        self_val = 1.0 + GRAM_JITTER
        u = self._gram_inv @ k
        schur = self_val - float(k @ u)
        if schur <= 0:
            raise IllConditionedError("non-positive Schur complement on insert")
        inv = np.empty((n + 1, n + 1))
        inv[:n, :n] = self._gram_inv + np.outer(u, u) / schur
        inv[:n, n] = -u / schur
        inv[n, :n] = -u / schur
        inv[n, n] = 1.0 / schur
        gram = np.empty((n + 1, n + 1))
        gram[:n, :n] = self._gram
        gram[:n, n] = k
        gram[n, :n] = k
        gram[n, n] = self_val
        self._elements = np.vstack([self._elements, z])
        self._gram = gram
        self._gram_inv = inv

    def check_inverse(self, tol: float = INVERSE_TOL) -> float:
        """Max-norm error of K @ K^{-1} vs identity; raises above tol."""
        if len(self) == 0:
            return 0.0
        err = float(np.max(np.abs(self._gram @ self._gram_inv - np.eye(len(self)))))
        if err > tol:
            raise IllConditionedError(f"cached Gram inverse error {err:.2e}")
        return err


def ald_distance(z: np.ndarray, dictionary: Dictionary):
    return dictionary.ald_distance(z)


def sparsify(samples: np.ndarray, cfg: KernelConfig) -> Dictionary:
    """One streaming pass over samples, admitting those with residual > threshold."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = Dictionary(samples.shape[1], cfg.dict_width)
    for z in samples:
        if cfg.max_elements is not None and len(d) >= cfg.max_elements:
            break
        delta, _ = d.ald_distance(z)
        if delta > cfg.ald_threshold:
            d.add(z)
    return d


def multikernel_feature(x: np.ndarray, dictionary: Dictionary,
                        cfg: KernelConfig) -> np.ndarray:
    """Width-major concatenation of kernel evaluations against the dictionary.

    Length = len(cfg.widths) * len(dictionary); every entry lies in (0, 1].
    """
    if len(dictionary) == 0:
        raise EmptyDictionaryError("dictionary is empty")
    x = np.asarray(x, dtype=float)
    d = dictionary.elements - x[None, :]
    sq = np.sum(d * d, axis=1)
    return np.concatenate([np.exp(-sq / w ** 2) for w in cfg.widths])


def feature_matrix(X: np.ndarray, dictionary: Dictionary,
                   cfg: KernelConfig) -> np.ndarray:
    """Features of many states at once, shape (n_features, M)."""
    if len(dictionary) == 0:
        raise EmptyDictionaryError("dictionary is empty")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sq = (np.sum(X * X, axis=1)[:, None]
          + np.sum(dictionary.elements ** 2, axis=1)[None, :]
          - 2.0 * X @ dictionary.elements.T)
    np.maximum(sq, 0.0, out=sq)
    return np.vstack([np.exp(-sq / w ** 2).T for w in cfg.widths])


def feature_length(dictionary: Dictionary, cfg: KernelConfig) -> int:
    return cfg.n_widths * len(dictionary)


# ---------------------------------------------------------------------------
# serialization (versioned, bit-exact)

_DICT_FORMAT = 1


def dictionary_to_bytes(dictionary: Dictionary, cfg: KernelConfig) -> bytes:
    header = {
        "format": _DICT_FORMAT,
        "dim": dictionary.dim,
        "width": dictionary.width,
        "widths": list(cfg.widths),
        "ald_threshold": cfg.ald_threshold,
        "max_elements": cfg.max_elements,
        "n": len(dictionary),
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = dictionary.elements.astype("<f8").tobytes()
    return len(head).to_bytes(4, "little") + head + body


def dictionary_from_bytes(raw: bytes):
    hlen = int.from_bytes(raw[:4], "little")
    header = json.loads(raw[4:4 + hlen].decode())
    if header["format"] != _DICT_FORMAT:
        raise ValueError(f"unsupported dictionary format {header['format']}")
    els = np.frombuffer(raw[4 + hlen:], dtype="<f8").reshape(header["n"], header["dim"])
    d = Dictionary(header["dim"], header["width"])
    for z in els:
        d.add(z)
    cfg = KernelConfig(widths=tuple(header["widths"]),
                       dict_width=header["width"],
                       ald_threshold=header["ald_threshold"],
                       max_elements=header["max_elements"])
    return d, cfg
