"""Dataset curation: cross-source identity matching and balanced sampling.

Identity matching compares two subjects through the pairwise cosine
similarities of their per-image embeddings: pairs whose similarity matrix
(and, in strict mode, its per-target column means) never exceeds the
threshold are discarded early; the survivors match when the global mean
similarity exceeds the threshold. Balanced sampling quantizes subjects into
(height, weight) bins and keeps at most a fixed number per bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, FormatError, InvalidValueError
from .sampling import uniform_stream

DEFAULT_TAU = 0.3
DEFAULT_BIN_HEIGHT_M = 0.05
DEFAULT_BIN_WEIGHT_KG = 5.0
DEFAULT_BIN_CAP = 3
EMBEDDING_DIM = 512


@dataclass(frozen=True)
class EmbeddingSubject:
    """One subject's unit-norm per-image identity embeddings."""

    subject_id: str
    gender: str
    embeddings: np.ndarray  # (num_images, dim), rows unit norm
    source: str = ""

    def __post_init__(self):
        e = np.asarray(self.embeddings, dtype=np.float64)
        if e.ndim != 2:
            raise DimensionMismatchError(f"embeddings must be 2D, got {e.shape}")
        if e.shape[0] == 0:
            raise InvalidValueError(f"subject '{self.subject_id}' has no images")
        norms = np.linalg.norm(e, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise InvalidValueError(
                f"subject '{self.subject_id}' embeddings are not unit norm",
                max_norm_error=float(np.abs(norms - 1.0).max()),
            )
        e.flags.writeable = False
        object.__setattr__(self, "embeddings", e)


@dataclass(frozen=True)
class MatchReport:
    """Outcome of matching two embedding sets."""

    matches: list[tuple[str, str, float]]          # (query id, target id, mean similarity)
    rejected_prefilter: int
    rejected_mean: int
    candidates: int
    tau: float
    strict_prefilter: bool


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    gender: str
    height_m: float | None = None
    weight_kg: float | None = None
    image_count: int = 0
    bmi: float | None = None

    def __post_init__(self):
        for name in ("height_m", "weight_kg"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidValueError(f"{name} must be positive when present",
                                        subject=self.subject_id)

    def resolve_bmi(self) -> float | None:
        if self.bmi is not None:
            return self.bmi
        if self.height_m and self.weight_kg:
            return self.weight_kg / (self.height_m ** 2)
        return None


def pairwise_similarity(query: EmbeddingSubject, target: EmbeddingSubject) -> np.ndarray:
    """Cosine similarity matrix between all image pairs, shape (Q, T)."""
    return query.embeddings @ target.embeddings.T


def match_identities(source_a: list[EmbeddingSubject], source_b: list[EmbeddingSubject],
                     tau: float = DEFAULT_TAU,
                     strict_prefilter: bool = False) -> MatchReport:
    """Match same-gender subject pairs whose mean similarity exceeds ``tau``.

    The prefilter drops a pair when neither the similarity matrix nor its
    per-target means contain any element above ``tau``; since column means
    never exceed the matrix maximum, that is equivalent to the matrix check
    alone. ``strict_prefilter`` additionally requires the per-target means to
    clear the threshold (the disjunctive reading; see docs/format.md).
    """
    if not 0.0 < tau < 1.0:
        raise InvalidValueError(f"tau must be in (0, 1), got {tau}")
    matches = []
    rejected_pre = 0
    rejected_mean = 0
    candidates = 0
    for qa in source_a:
        for tb in source_b:
            if qa.gender != tb.gender:
                continue
            candidates += 1
            sim = pairwise_similarity(qa, tb)
            per_target = sim.mean(axis=0)
            passes = sim.max() > tau
            if strict_prefilter:
                passes = passes and per_target.max() > tau
            if not passes:
                rejected_pre += 1
                continue
            mean_sim = float(sim.mean())
            if mean_sim > tau:
                matches.append((qa.subject_id, tb.subject_id, mean_sim))
            else:
                rejected_mean += 1
    return MatchReport(matches=matches, rejected_prefilter=rejected_pre,
                       rejected_mean=rejected_mean, candidates=candidates,
                       tau=float(tau), strict_prefilter=strict_prefilter)


def balance_sample(subjects: list[SubjectRecord], bin_height_m: float = DEFAULT_BIN_HEIGHT_M,
                   bin_weight_kg: float = DEFAULT_BIN_WEIGHT_KG, cap: int = DEFAULT_BIN_CAP,
                   seed: int = 0) -> tuple[list[str], int]:
    """Uniformly keep at most ``cap`` subjects per (height, weight) bin.

    Subjects missing height or weight are skipped; returns (selected ids in
    input order, skipped count). Selection is deterministic in the seed: each
    subject gets one stream value and the lowest values win within a bin.
    """
    if cap < 1:
        raise InvalidValueError("cap must be >= 1")
    keys: dict[tuple[int, int], list[int]] = {}
    skipped = 0
    u = uniform_stream(seed, 0, len(subjects))
    for i, s in enumerate(subjects):
        if s.height_m is None or s.weight_kg is None:
            skipped += 1
            continue
        key = (int(np.floor(s.height_m / bin_height_m)),
               int(np.floor(s.weight_kg / bin_weight_kg)))
        keys.setdefault(key, []).append(i)
    chosen: list[int] = []
    for key in sorted(keys):
        members = keys[key]
        if len(members) <= cap:
            chosen.extend(members)
        else:
            order = sorted(members, key=lambda i: (u[i], i))
            chosen.extend(sorted(order[:cap]))
    chosen.sort()
    return [subjects[i].subject_id for i in chosen], skipped


def bmi_weighted_pick(subjects: list[SubjectRecord], count: int, seed: int = 0) -> list[str]:
    """Sample ``count`` subjects without replacement, probability per draw
    proportional to BMI (weighted-key scheme: key = u**(1/w), top keys win).
    """
    if count < 0:
        raise InvalidValueError("count must be >= 0")
    if count > len(subjects):
        raise InvalidValueError(
            f"cannot pick {count} from {len(subjects)} subjects",
            count=count, population=len(subjects),
        )
    if count == 0:
        return []
    bmis = []
    for s in subjects:
        b = s.resolve_bmi()
        if b is None or b <= 0:
            raise InvalidValueError(f"subject '{s.subject_id}' has no usable BMI")
        bmis.append(b)
    w = np.asarray(bmis)
    u = uniform_stream(seed, 0, len(subjects))
    # log(u)/w is monotone in u**(1/w); larger is better
    keys = np.log(np.maximum(u, 1e-300)) / w
    order = np.argsort(-keys, kind="stable")[:count]
    order.sort()
    return [subjects[i].subject_id for i in order]


# ---------------------------------------------------------------------------
# Embedding file IO: JSON manifest + little-endian float32 buffer


def save_embeddings(subjects: list[EmbeddingSubject], outdir: str | Path) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    offset = 0
    blobs = []
    for s in subjects:
        e32 = s.embeddings.astype("<f4")
        # renormalize in float32 so the unit-norm invariant survives quantization
        norms = np.linalg.norm(e32.astype(np.float64), axis=1)
        e32 = (e32.astype(np.float64) / norms[:, None]).astype("<f4")
        rows.append({
            "id": s.subject_id, "gender": s.gender, "source": s.source,
            "offset": offset, "count": int(e32.shape[0]),
        })
        offset += int(e32.shape[0])
        blobs.append(e32.tobytes())
    dim = subjects[0].embeddings.shape[1] if subjects else EMBEDDING_DIM
    manifest = {
        "format": "embedding-set",
        "version": 1,
        "dim": int(dim),
        "buffer": "embeddings.f32",
        "subjects": rows,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (outdir / "embeddings.f32").write_bytes(b"".join(blobs))


def load_embeddings(path: str | Path) -> list[EmbeddingSubject]:
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read embedding manifest: {exc}", path=str(manifest_path))
    if manifest.get("format") != "embedding-set":
        raise FormatError("not an embedding-set manifest", path=str(manifest_path))
    dim = int(manifest["dim"])
    raw = (manifest_path.parent / manifest["buffer"]).read_bytes()
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if flat.size % dim != 0:
        raise FormatError("embedding buffer size is not a multiple of dim",
                          path=str(manifest_path))
    mat = flat.reshape(-1, dim)
    out = []
    for row in manifest["subjects"]:
        sl = mat[row["offset"]:row["offset"] + row["count"]]
        if sl.shape[0] != row["count"]:
            raise FormatError(f"subject '{row['id']}' overruns the buffer",
                              subject=row["id"])
        out.append(EmbeddingSubject(subject_id=row["id"], gender=row["gender"],
                                    embeddings=sl, source=row.get("source", "")))
    return out


def make_synthetic_sites(num_duplicates: int = 50, num_distractors: int = 50,
                         images_per_subject: int = 3, noise: float = 0.5,
                         dim: int = EMBEDDING_DIM, seed: int = 0,
                         gender: str = "female"):
    """Two synthetic "sites" sharing ``num_duplicates`` identities.

    Each identity is a random unit vector; every image embedding is the
    identity plus Gaussian noise of relative magnitude ``noise``,
    renormalized. Two images of one identity then have expected cosine
    1 / (1 + noise^2), so the default 0.5 calibrates to about 0.8.
    Returns (site_a, site_b, expected_pairs).
    """
    from .sampling import CounterRng

    rng = CounterRng(seed)

    def unit(n):
        v = rng.normal(n * dim).reshape(n, dim)
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def noisy(center, n):
        v = center[None, :] + noise * rng.normal(n * dim).reshape(n, dim) / np.sqrt(dim)
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    dup_ids = unit(num_duplicates)
    site_a, site_b, expected = [], [], []
    for i in range(num_duplicates):
        site_a.append(EmbeddingSubject(f"dupA{i:03d}", gender,
                                       noisy(dup_ids[i], images_per_subject), "siteA"))
        site_b.append(EmbeddingSubject(f"dupB{i:03d}", gender,
                                       noisy(dup_ids[i], images_per_subject), "siteB"))
        expected.append((f"dupA{i:03d}", f"dupB{i:03d}"))
    for i, c in enumerate(unit(num_distractors)):
        site_a.append(EmbeddingSubject(f"lonA{i:03d}", gender,
                                       noisy(c, images_per_subject), "siteA"))
    for i, c in enumerate(unit(num_distractors)):
        site_b.append(EmbeddingSubject(f"lonB{i:03d}", gender,
                                       noisy(c, images_per_subject), "siteB"))
    return site_a, site_b, expected
