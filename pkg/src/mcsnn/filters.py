"""Finite temporal filter kernels for synaptic and somatic traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class FilterBasis:
    """Fixed bank of filter kernels.

    `synaptic_kernels` has shape (num_basis, duration): row b is the kernel
    applied to every pre-synaptic spike train, indexed by delay 0..duration-1.
    `somatic_kernel` (duration,) filters a neuron's own spike history.
    Kernels are fixed at construction and never change during training.
    """

    synaptic_kernels: np.ndarray
    somatic_kernel: np.ndarray

    def __post_init__(self):
        syn = np.asarray(self.synaptic_kernels, dtype=float)
        som = np.asarray(self.somatic_kernel, dtype=float)
        if syn.ndim != 2 or som.ndim != 1 or syn.shape[1] != som.shape[0]:
            raise ConfigurationError(
                f"kernel shapes inconsistent: synaptic {syn.shape}, somatic {som.shape}")
        if not (np.isfinite(syn).all() and np.isfinite(som).all()):
            raise ConfigurationError("filter kernels must be finite")
        object.__setattr__(self, "synaptic_kernels", syn)
        object.__setattr__(self, "somatic_kernel", som)

    @property
    def num_basis(self) -> int:
        return self.synaptic_kernels.shape[0]

    @property
    def duration(self) -> int:
        return self.synaptic_kernels.shape[1]

    def to_dict(self) -> dict:
        return {
            "synaptic_kernels": self.synaptic_kernels.tolist(),
            "somatic_kernel": self.somatic_kernel.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterBasis":
        return cls(np.array(d["synaptic_kernels"], dtype=float),
                   np.array(d["somatic_kernel"], dtype=float))


def save_kernels_text(basis: FilterBasis, path) -> None:
    """Dump the kernel bank as plain-text matrices for inspection."""
    with open(path, "w") as fh:
        fh.write("# synaptic kernels (basis x duration)\n")
        np.savetxt(fh, basis.synaptic_kernels)
        fh.write("# somatic kernel (duration)\n")
        np.savetxt(fh, basis.somatic_kernel[None, :])


def make_raised_cosine_basis(num_basis: int, duration: int) -> FilterBasis:
    """Bank of raised-cosine bumps tiling the filter window.

    Kernel b evaluates 0.5*(1 + cos(pi*(t - c_b)/w)) for |t - c_b| <= w and 0
    outside, on the integer grid t = 0..duration-1.  Centers c_b are evenly
    spaced over [0, duration-1]; the half-width w is the center spacing
    (duration/2 for a single kernel).  Each kernel is rescaled so its peak
    grid value is exactly 1.  The somatic kernel is the first synaptic one.
    """
    if num_basis < 1 or duration < 2:
        raise ConfigurationError(
            f"need num_basis >= 1 and duration >= 2, got {num_basis}, {duration}")
    t = np.arange(duration, dtype=float)
    centers = np.linspace(0.0, duration - 1.0, num_basis)
    width = (duration - 1.0) / (num_basis - 1.0) if num_basis > 1 else duration / 2.0
    kernels = np.zeros((num_basis, duration))
    for b, c in enumerate(centers):
        phase = (t - c) / width
        bump = 0.5 * (1.0 + np.cos(np.pi * phase))
        bump[np.abs(phase) > 1.0] = 0.0
        kernels[b] = bump / bump.max()
    return FilterBasis(synaptic_kernels=kernels, somatic_kernel=kernels[0].copy())
