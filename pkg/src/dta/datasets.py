"""Synthetic paired datasets, IDX/CSV loaders and correspondence sampling.

Every generator is a pure function of its arguments and seed.  Parameters
the generators use are recorded in ``PairedDataset.meta`` so they can be
written next to the data.
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .diffusion_bridge import CorrespondenceSet
from .errors import BadCorrespondence, BadFile, NoSharedMass
from .kernel_graph import DomainData


@dataclass
class PairedDataset:
    domain1: DomainData
    domain2: DomainData
    ground_truth: Optional[np.ndarray] = None
    latent: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth, dtype=int).reshape(-1, 2)
            if len(gt):
                if gt[:, 0].min() < 0 or gt[:, 0].max() >= self.domain1.n:
                    raise BadCorrespondence("ground truth index out of range for domain 1")
                if gt[:, 1].min() < 0 or gt[:, 1].max() >= self.domain2.n:
                    raise BadCorrespondence("ground truth index out of range for domain 2")
            if len(np.unique(gt[:, 0])) != len(gt) or len(np.unique(gt[:, 1])) != len(gt):
                raise BadCorrespondence("ground truth must be injective")
            self.ground_truth = gt

    @property
    def shared_fraction(self) -> float:
        """Fraction of domain-1 points with a true counterpart."""
        if self.ground_truth is None:
            return float("nan")
        return len(self.ground_truth) / self.domain1.n

    def truth_map(self) -> dict:
        return {int(i): int(j) for i, j in self.ground_truth}


def _identity_pairs(n: int) -> np.ndarray:
    return np.column_stack([np.arange(n), np.arange(n)])


def gen_swiss_scurve(
    n: int = 1000,
    noise: float = 0.0,
    seed: int = 0,
    height_roll: float = 21.0,
    height_scurve: float = 2.0,
) -> PairedDataset:
    """Swiss roll and S curve driven by one uniform 2-D latent ``(u, w)`` on the unit square.

    ``u`` is rescaled to ``[1.5pi, 4.5pi]`` for the roll and ``[-1.5pi, 1.5pi]``
    for the S curve; ``w`` is rescaled to each surface's height.  The default
    heights give both surfaces a similar length-to-height ratio.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.0, 1.0, n)
    w = rng.uniform(0.0, 1.0, n)
    u = 1.5 * np.pi + 3.0 * np.pi * r
    u2 = -1.5 * np.pi + 3.0 * np.pi * r
    X = np.column_stack([u * np.cos(u), height_roll * w, u * np.sin(u)])
    Y = np.column_stack([np.sin(u2), height_scurve * w, np.sign(u2) * (np.cos(u2) - 1.0)])
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
        Y = Y + noise * rng.standard_normal(Y.shape)
    return PairedDataset(
        DomainData(X, domain_id="swiss_roll", feature_names=["x", "y", "z"]),
        DomainData(Y, domain_id="s_curve", feature_names=["x", "y", "z"]),
        _identity_pairs(n),
        np.column_stack([r, w]),
        {"dataset": "swiss-scurve", "n": n, "noise": noise, "seed": seed,
         "u_range_roll": [1.5 * np.pi, 4.5 * np.pi], "u_range_scurve": [-1.5 * np.pi, 1.5 * np.pi],
         "height_roll": height_roll, "height_scurve": height_scurve},
    )


def gen_double_helix(n: int = 1000, noise: float = 0.0, seed: int = 0) -> PairedDataset:
    """Two phase-shifted helices over a shared parameter ``s`` in ``[0, 4pi]``."""
    if n < 10:
        raise ValueError("n must be at least 10")
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 4.0 * np.pi, n)
    z = s / (4.0 * np.pi)
    X = np.column_stack([np.cos(s), np.sin(s), z])
    Y = np.column_stack([np.cos(s + np.pi), np.sin(s + np.pi), z])
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
        Y = Y + noise * rng.standard_normal(Y.shape)
    return PairedDataset(
        DomainData(X, domain_id="helix1"),
        DomainData(Y, domain_id="helix2"),
        _identity_pairs(n),
        s[:, None],
        {"dataset": "helix", "n": n, "noise": noise, "seed": seed, "phase_shift": np.pi},
    )


BLOB_MEANS_1 = np.array([[0.0, 0.0], [0.0, 0.3], [3.0, 3.0]])
BLOB_MEANS_2 = np.array([[3.0, 3.0], [0.0, 0.3], [0.0, 0.0]])


def gen_gaussian_blobs(n_per_class: int = 200, seed: int = 0, variance: float = 0.5) -> PairedDataset:
    """Three labelled Gaussian classes where each domain confuses a different pair.

    Domain 1 overlaps classes 0 and 1; domain 2 overlaps classes 1 and 2.
    Paired observations share their within-class offset, so the two views
    describe the same underlying sample.
    """
    if n_per_class < 5:
        raise ValueError("n_per_class must be at least 5")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), n_per_class)
    offset = np.sqrt(variance) * rng.standard_normal((labels.size, 2))
    X = BLOB_MEANS_1[labels] + offset
    Y = BLOB_MEANS_2[labels] + offset
    return PairedDataset(
        DomainData(X, labels, domain_id="blobs1"),
        DomainData(Y, labels.copy(), domain_id="blobs2"),
        _identity_pairs(labels.size),
        offset,
        {"dataset": "blobs", "n_per_class": n_per_class, "seed": seed, "variance": variance,
         "means1": BLOB_MEANS_1.tolist(), "means2": BLOB_MEANS_2.tolist()},
    )


def gen_blob_chain(
    n_per_class: int = 100,
    n_classes: int = 7,
    seed: int = 0,
    spacing: float = 1.0,
    spread: float = 0.35,
    noise: float = 0.02,
) -> PairedDataset:
    """Labelled Gaussian blobs laid along a line in one domain and along an arc in the other.

    Neighbouring blobs overlap, so each domain's graph is connected; this makes
    the data suitable for subsetting into partially overlapping domains.
    """
    if n_per_class < 5:
        raise ValueError("n_per_class must be at least 5")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    latent = np.column_stack([labels * spacing, np.zeros(labels.size)])
    latent = latent + spread * rng.standard_normal(latent.shape)
    X = latent.copy()
    radius = n_classes * spacing / np.pi
    theta = latent[:, 0] / radius
    Y = np.column_stack([
        (radius + latent[:, 1]) * np.cos(theta),
        (radius + latent[:, 1]) * np.sin(theta),
        0.5 * np.sin(2.0 * theta),
    ])
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
        Y = Y + noise * rng.standard_normal(Y.shape)
    return PairedDataset(
        DomainData(X, labels, domain_id="chain_line"),
        DomainData(Y, labels.copy(), domain_id="chain_arc"),
        _identity_pairs(labels.size),
        latent,
        {"dataset": "blob-chain", "n_per_class": n_per_class, "n_classes": n_classes,
         "seed": seed, "spacing": spacing, "spread": spread, "noise": noise},
    )


def gen_mi_features(
    n: int = 1000,
    n_features: int = 10,
    seed: int = 0,
    noise: float = 0.05,
    filler_scale: float = 0.02,
) -> PairedDataset:
    """Two domains of ``n_features`` columns with three planted dependent column pairs.

    Both views are noisy embeddings of a 1-D uniform latent ``s``: columns 0-2
    trace a helix-like curve ``(s, sin(2 pi s) / 2, cos(2 pi s) / 2)`` in
    domain 1 and ``(sqrt(s), sin(2 pi s) / 2, cos(2 pi s) / 2)`` in domain 2,
    each with its own Gaussian noise.  The remaining columns are small
    independent noise.  The planted pairs are ``(0, 0)``, ``(1, 1)`` and
    ``(2, 2)``; they carry the largest cross-domain MI.
    """
    if n_features < 3:
        raise ValueError("n_features must be at least 3")
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 1.0, n)
    ring = 0.5 * np.column_stack([np.sin(2 * np.pi * s), np.cos(2 * np.pi * s)])
    sig1 = np.column_stack([s, ring])
    sig2 = np.column_stack([np.sqrt(s), ring])
    extra = n_features - 3
    X = np.column_stack([sig1 + noise * rng.standard_normal(sig1.shape),
                         filler_scale * rng.standard_normal((n, extra))])
    Y = np.column_stack([sig2 + noise * rng.standard_normal(sig2.shape),
                         filler_scale * rng.standard_normal((n, extra))])
    names = [f"f{c}" for c in range(n_features)]
    return PairedDataset(
        DomainData(X, feature_names=names, domain_id="mi1"),
        DomainData(Y, feature_names=names, domain_id="mi2"),
        _identity_pairs(n),
        s[:, None],
        {"dataset": "mi-features", "n": n, "n_features": n_features, "seed": seed,
         "noise": noise, "filler_scale": filler_scale, "planted_pairs": [[0, 0], [1, 1], [2, 2]]},
    )


def gen_partial_overlap(
    base: PairedDataset, keep1: Iterable[int], keep2: Iterable[int], seed: int = 0
) -> PairedDataset:
    """Restrict each domain to a class subset; only shared classes keep their pairing.

    Domain-2 rows are shuffled with ``seed`` so row order carries no pairing information.
    """
    keep1, keep2 = set(int(c) for c in keep1), set(int(c) for c in keep2)
    if not keep1 or not keep2:
        raise ValueError("keep sets must be nonempty")
    if not keep1 & keep2:
        raise NoSharedMass("keep sets have no class in common")
    l1, l2 = base.domain1.labels, base.domain2.labels
    if l1 is None or l2 is None:
        raise ValueError("partial overlap needs labels in both domains")
    rows1 = np.flatnonzero(np.isin(l1, sorted(keep1)))
    rows2 = np.flatnonzero(np.isin(l2, sorted(keep2)))
    rng = np.random.default_rng(seed)
    rows2 = rows2[rng.permutation(rows2.size)]
    new1 = {int(r): k for k, r in enumerate(rows1)}
    new2 = {int(r): k for k, r in enumerate(rows2)}
    truth = sorted(
        (new1[int(i)], new2[int(j)])
        for i, j in base.ground_truth
        if int(i) in new1 and int(j) in new2
    )
    truth = np.array(truth, dtype=int).reshape(-1, 2)
    if len(truth) == 0:
        raise NoSharedMass("no ground-truth pair survives the restriction")
    latent = None if base.latent is None else base.latent[rows1]
    out = PairedDataset(
        base.domain1.subset(rows1), base.domain2.subset(rows2), truth, latent,
        dict(base.meta, keep1=sorted(keep1), keep2=sorted(keep2), partial_seed=seed),
    )
    out.meta["shared_fraction"] = out.shared_fraction
    return out


def sample_correspondences(
    truth, fraction: float, seed: int = 0, n: Optional[int] = None, m: Optional[int] = None
) -> CorrespondenceSet:
    """Uniform subset of the ground-truth pairs of size ``max(1, round(fraction * |truth|))``."""
    if isinstance(truth, PairedDataset):
        n = truth.domain1.n if n is None else n
        m = truth.domain2.n if m is None else m
        truth = truth.ground_truth
    truth = np.asarray(truth, dtype=int).reshape(-1, 2)
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    size = max(1, int(round(fraction * len(truth))))
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(truth), size=size, replace=False))
    n = int(truth[:, 0].max()) + 1 if n is None else n
    m = int(truth[:, 1].max()) + 1 if m is None else m
    return CorrespondenceSet(truth[pick], n, m)


# ---------------------------------------------------------------- MNIST


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an IDX file (``0x00000803`` images or ``0x00000801`` labels)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise BadFile(f"{path}: file too short for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == 0x00000803:
        if len(raw) < 16:
            raise BadFile(f"{path}: truncated image header")
        count, rows, cols = struct.unpack(">III", raw[4:16])
        shape, offset = (count, rows, cols), 16
    elif magic == 0x00000801:
        count = struct.unpack(">I", raw[4:8])[0]
        shape, offset = (count,), 8
    else:
        raise BadFile(f"{path}: bad IDX magic number {magic:#010x}")
    expected = int(np.prod(shape))
    body = np.frombuffer(raw, dtype=np.uint8, offset=offset)
    if body.size != expected:
        raise BadFile(f"{path}: header promises {expected} bytes of data, found {body.size}")
    return body.reshape(shape)


def write_idx(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.uint8)
    if data.ndim == 3:
        header = struct.pack(">IIII", 0x00000803, *data.shape)
    elif data.ndim == 1:
        header = struct.pack(">II", 0x00000801, data.shape[0])
    else:
        raise ValueError("IDX writer supports image stacks (3-D) and label vectors (1-D)")
    with open(path, "wb") as fh:
        fh.write(header + data.tobytes())


def distort_images(images: np.ndarray, rotation_deg: float = 45.0, blur_sigma: float = 1.0) -> np.ndarray:
    """2x downscale (2x2 mean), rotation about the centre with zero fill, then Gaussian blur."""
    imgs = np.asarray(images, dtype=float)
    N, h, w = imgs.shape
    small = imgs.reshape(N, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    out = np.empty_like(small)
    for k in range(N):
        img = small[k]
        if rotation_deg % 360:
            img = ndimage.rotate(img, rotation_deg, reshape=False, order=1, mode="constant", cval=0.0)
        if blur_sigma > 0:
            img = ndimage.gaussian_filter(img, blur_sigma, truncate=3.0, mode="constant", cval=0.0)
        out[k] = img
    return out


def gen_mnist_double(
    images,
    labels=None,
    seed: int = 0,
    rotation_deg: float = 45.0,
    blur_sigma: float = 1.0,
    n: Optional[int] = None,
) -> PairedDataset:
    """Original digits against downscaled, rotated and blurred copies.

    ``images``/``labels`` are arrays or paths to IDX files; ``n`` draws a
    random subset with ``seed``.
    """
    if not isinstance(images, np.ndarray):
        images = read_idx(images)
    if labels is not None and not isinstance(labels, np.ndarray):
        labels = read_idx(labels)
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise BadFile(f"expected 28x28 images, got shape {images.shape}")
    if labels is not None and len(labels) != len(images):
        raise BadFile(f"{len(labels)} labels for {len(images)} images")
    rng = np.random.default_rng(seed)
    rows = np.arange(len(images))
    if n is not None and n < len(images):
        rows = np.sort(rng.choice(len(images), n, replace=False))
    orig = images[rows].astype(float) / 255.0
    dist = distort_images(orig, rotation_deg, blur_sigma)
    lab = None if labels is None else np.asarray(labels)[rows].astype(int)
    return PairedDataset(
        DomainData(orig.reshape(len(rows), -1), lab, domain_id="mnist"),
        DomainData(dist.reshape(len(rows), -1), None if lab is None else lab.copy(), domain_id="mnist_distorted"),
        _identity_pairs(len(rows)),
        None,
        {"dataset": "mnist-double", "seed": seed, "rotation_deg": rotation_deg,
         "blur_sigma": blur_sigma, "n": len(rows)},
    )


# ---------------------------------------------------------------- CSV


class ParseError(BadFile):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def save_domain_csv(domain: DomainData, path, label_col: str = "label") -> None:
    names = domain.feature_names or [f"x{c}" for c in range(domain.dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(names) + ([label_col] if domain.labels is not None else []))
        for r in range(domain.n):
            row = [_fmt(x) for x in domain.features[r]]
            if domain.labels is not None:
                row.append(str(int(domain.labels[r])))
            wr.writerow(row)


def save_pairs_csv(pairs, path, header: Tuple[str, str] = ("i", "j")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for i, j in np.asarray(pairs, dtype=int).reshape(-1, 2):
            wr.writerow([int(i), int(j)])


def load_domain_csv(path, label_col: Optional[str] = None, domain_id: Optional[str] = None) -> DomainData:
    """Numeric CSV with a header row; ``label_col`` (if given) becomes integer labels."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_col is not None and label_col not in header:
        raise ParseError(f"{path}: label column {label_col!r} not in header {header}")
    lab_idx = header.index(label_col) if label_col is not None else None
    feat_idx = [c for c in range(len(header)) if c != lab_idx]
    feats, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            feats.append([float(row[c]) for c in feat_idx])
        except ValueError:
            bad = next(c for c in feat_idx if not _is_float(row[c]))
            raise ParseError(
                f"{path}:{lineno}: non-numeric value {row[bad]!r} in column {header[bad]!r}"
            ) from None
        if lab_idx is not None:
            try:
                labels.append(int(float(row[lab_idx])))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: label {row[lab_idx]!r} is not an integer") from None
    if not feats:
        raise ParseError(f"{path}: no data rows")
    X = np.array(feats, dtype=float)
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise ParseError(f"{path}:{bad + 2}: NaN or Inf value")
    return DomainData(
        X,
        np.array(labels, dtype=int) if lab_idx is not None else None,
        [header[c] for c in feat_idx],
        domain_id or path.stem,
    )


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_pairs_csv(path, n: Optional[int] = None, m: Optional[int] = None) -> np.ndarray:
    """Integer pairs from a CSV with columns ``i,j``; indices are bounds-checked when sizes are given."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "i" not in header or "j" not in header:
        raise ParseError(f"{path}: correspondence file needs columns 'i' and 'j', got {header}")
    ci, cj = header.index("i"), header.index("j")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            i, j = int(row[ci]), int(row[cj])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: indices must be integers, got {row}") from None
        if i < 0 or (n is not None and i >= n):
            raise ParseError(f"{path}:{lineno}: index i={i} out of range for n={n}")
        if j < 0 or (m is not None and j >= m):
            raise ParseError(f"{path}:{lineno}: index j={j} out of range for m={m}")
        out.append((i, j))
    return np.array(out, dtype=int).reshape(-1, 2)


def load_csv_pair(path1, path2, corr_path, label_col: Optional[str] = None, truth_path=None):
    """Two domain CSVs plus a correspondence CSV -> ``(PairedDataset, CorrespondenceSet)``."""
    d1 = load_domain_csv(path1, label_col, "domain1")
    d2 = load_domain_csv(path2, label_col, "domain2")
    pairs = load_pairs_csv(corr_path, d1.n, d2.n)
    truth = None if truth_path is None else load_pairs_csv(truth_path, d1.n, d2.n)
    return PairedDataset(d1, d2, truth), CorrespondenceSet(pairs, d1.n, d2.n)
