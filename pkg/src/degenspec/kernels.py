"""Block-circulant kernel operators on product momentum grids.

For a rotation-invariant kernel k(p, p') = k(|p - p'|) on a grid whose
azimuths are uniform, the Nystrom matrix commutes with the discrete
azimuthal shift.  A DFT over the azimuth index splits it exactly into
``M // 2 + 1`` real symmetric blocks of meridional size ``Q``.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .symbols import MomentumGrid

LANCZOS_MIN = 256


def fourier_norm(n: int) -> float:
    return (2.0 * np.pi) ** (-n / 2.0)


class CirculantOperator:
    """Real symmetric block-circulant matrix stored by azimuthal mode.

    ``blocks[m]`` is the Q x Q block of mode m; modes 1..M/2-1 appear twice
    in the spectrum (cos and sin partners).
    """

    def __init__(self, blocks: np.ndarray, n_azimuth: int):
        self.blocks = blocks
        self.n_azimuth = n_azimuth
        self.n_modes, self.Q, _ = blocks.shape

    @property
    def size(self) -> int:
        return self.Q * self.n_azimuth

    def multiplicity(self, m: int) -> int:
        if m == 0 or (self.n_azimuth % 2 == 0 and m == self.n_azimuth // 2):
            return 1
        return 2

    def scaled(self, left: np.ndarray, diag: np.ndarray | None = None, factor: float = 1.0):
        """Blocks of ``diag + factor * S B S`` with S = diag(left)."""
        out = factor * left[None, :, None] * self.blocks * left[None, None, :]
        if diag is not None:
            idx = np.arange(self.Q)
            out[:, idx, idx] += diag[None, :]
        return CirculantOperator(out, self.n_azimuth)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to vectors laid out as (Q * M,) or (Q * M, k)."""
        single = x.ndim == 1
        X = x.reshape(self.Q, self.n_azimuth, -1)
        Xh = np.fft.rfft(X, axis=1).transpose(1, 0, 2)  # (modes, Q, k)
        Yh = self.blocks @ np.ascontiguousarray(Xh.real) + 1j * (self.blocks @ np.ascontiguousarray(Xh.imag))
        Y = np.fft.irfft(Yh.transpose(1, 0, 2), n=self.n_azimuth, axis=1).reshape(self.size, -1)
        return Y[:, 0] if single else Y

    def dense(self) -> np.ndarray:
        """Full matrix; for tests on small grids."""
        eye = np.eye(self.size)
        return self.matvec(eye)

    def _block_top(self, m: int, k: int, vectors: bool):
        # Lanczos with a fixed start vector (deterministic) for a few extremes of big blocks
        if self.Q >= LANCZOS_MIN and k + 2 <= self.Q // 4:
            out = spla.eigsh(self.blocks[m], k=k + 2, which="LA", tol=0.0,
                             v0=np.ones(self.Q), return_eigenvectors=vectors)
            if vectors:
                order = np.argsort(out[0])[-k:]
                return out[0][order], out[1][:, order]
            return np.sort(out)[-k:]
        return sla.eigh(self.blocks[m], eigvals_only=not vectors,
                        subset_by_index=[self.Q - k, self.Q - 1])

    def eigvalsh(self, top: int | None = None) -> np.ndarray:
        """All eigenvalues (with azimuthal multiplicity), descending; or the ``top`` largest."""
        vals = []
        for m in range(self.n_modes):
            if top is not None and top < self.Q:
                ev = self._block_top(m, top, vectors=False)
            else:
                ev = np.linalg.eigvalsh(self.blocks[m])
            vals.extend(np.repeat(ev, self.multiplicity(m)))
        vals = np.sort(np.asarray(vals))[::-1]
        return vals if top is None else vals[:top]

    def eigvalsh_low(self, count: int) -> np.ndarray:
        """The ``count`` smallest eigenvalues, ascending."""
        vals = []
        k = min(count, self.Q)
        for m in range(self.n_modes):
            ev = sla.eigh(self.blocks[m], eigvals_only=True, subset_by_index=[0, k - 1])
            vals.extend(np.repeat(ev, self.multiplicity(m)))
        return np.sort(np.asarray(vals))[:count]

    def eigh_top(self, count: int):
        """Largest ``count`` eigenpairs as (values, modes, block vectors), descending."""
        found = []
        k = min(count, self.Q)
        for m in range(self.n_modes):
            ev, vec = self._block_top(m, k, vectors=True)
            for j in range(k):
                for part in ("cos", "sin")[: self.multiplicity(m)]:
                    found.append((ev[j], m, part, vec[:, j]))
        found.sort(key=lambda item: (-item[0], item[1], item[2]))
        return found[:count]

    def mode_vector(self, m: int, x: np.ndarray, part: str = "cos") -> np.ndarray:
        """Lift a block eigenvector to a unit-norm real vector on the full grid."""
        c = np.arange(self.n_azimuth)
        phase = 2.0 * np.pi * m * c / self.n_azimuth
        if self.multiplicity(m) == 1:
            ang = np.cos(phase) / np.sqrt(self.n_azimuth)
        else:
            trig = np.cos if part == "cos" else np.sin
            ang = trig(phase) * np.sqrt(2.0 / self.n_azimuth)
        return np.outer(x, ang).ravel()


def meridional_nodes(grid: MomentumGrid) -> np.ndarray:
    """Node vectors at azimuth index 0 for every meridional index (Q, n)."""
    return grid.nodes.reshape(grid.n_meridional, grid.n_azimuth, grid.n)[:, 0, :]


def kernel_operator(grid: MomentumGrid, kernel_sq, chunk: int = 64) -> CirculantOperator:
    """Symmetrized Nystrom operator sqrt(W) k(|p-p'|^2) sqrt(W') as blocks.

    ``kernel_sq`` maps squared distances to kernel values.
    """
    Q, M = grid.n_meridional, grid.n_azimuth
    nodes = grid.nodes.reshape(Q, M, grid.n)
    ref = nodes[:, 0, :]
    sqrt_w = np.sqrt(grid.weights.reshape(Q, M)[:, 0])
    n_modes = M // 2 + 1
    blocks = np.empty((n_modes, Q, Q))
    for start in range(0, Q, chunk):
        stop = min(start + chunk, Q)
        d2 = np.sum((ref[start:stop, None, None, :] - nodes[None, :, :, :]) ** 2, axis=-1)
        row = kernel_sq(d2) * sqrt_w[start:stop, None, None] * sqrt_w[None, :, None]
        blocks[:, start:stop, :] = np.fft.rfft(row, axis=-1).real.transpose(2, 0, 1)
    # symmetrize roundoff from the FFT
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return CirculantOperator(blocks, M)


def potential_operator(grid: MomentumGrid, V) -> CirculantOperator:
    """Convolution by (2 pi)^{-n/2} vhat on the grid, symmetrized."""
    pref = fourier_norm(grid.n)
    return kernel_operator(grid, lambda d2: pref * V.fourier_sq(d2))
