"""Corpus management: ingest, forged-set generation, splits, pair sampling.

Corpus layout on disk:

    root/<country>/templates/*.png|jpg      genuine template renders
    root/<country>/scans/*.png|jpg          genuine scanned images
    root/<country>/annotations/<stem>.json  optional foreground rectangles
                                            [{"x":..,"y":..,"w":..,"h":..}, ...]

Manifests are JSON-lines with a `gfv-manifest/1` header line. Forged
images land under `out/<country>/forged/` with a `_f` suffix on the
parent basename. Every operation that draws randomness derives its
generator from the seed plus a stable key (record id, stratum, country),
never from iteration order, so results are reproducible and documents
may be processed in parallel.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .errors import (
    EmptyCorpusError,
    InsufficientDocumentsError,
    ManifestFormatError,
    NoCandidateZonesError,
    StratumTooSmallError,
)
from .imaging import GrayImage, GuillocheParams, Region

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "gfv-manifest/1"

COUNTRY_CODES = ("alb", "aze", "esp", "est", "fin", "grc", "iva", "rus", "srb", "svk")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff")


@dataclass(frozen=True)
class TamperEntry:
    """One applied copy-move: source region, destination region, block size."""

    src: Region
    dst: Region
    block_size: int

    def to_dict(self) -> dict:
        return {"src": self.src.to_dict(), "dst": self.dst.to_dict(),
                "block_size": self.block_size}

    @classmethod
    def from_dict(cls, d: dict) -> "TamperEntry":
        return cls(Region.from_dict(d["src"]), Region.from_dict(d["dst"]),
                   int(d["block_size"]))


@dataclass
class DocumentRecord:
    """One catalogued document image."""

    id: str
    country: str
    doc_class: str  # "genuine" | "forged"
    source: str  # "template" | "scan"
    image_path: str
    tamper_log: list[TamperEntry] | None = None
    split: str | None = None  # "train" | "test" | None

    def __post_init__(self):
        if self.country not in COUNTRY_CODES:
            raise ValueError(f"unknown country code {self.country!r}")
        if self.doc_class not in ("genuine", "forged"):
            raise ValueError(f"doc_class must be genuine|forged, got {self.doc_class!r}")
        if self.source not in ("template", "scan"):
            raise ValueError(f"source must be template|scan, got {self.source!r}")
        forged = self.doc_class == "forged"
        if forged != bool(self.tamper_log):
            raise ValueError("doc_class is forged iff tamper_log is present and non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "country": self.country,
            "doc_class": self.doc_class,
            "source": self.source,
            "image_path": self.image_path,
            "tamper_log": [t.to_dict() for t in self.tamper_log] if self.tamper_log else None,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentRecord":
        log = d.get("tamper_log")
        return cls(
            id=d["id"],
            country=d["country"],
            doc_class=d["doc_class"],
            source=d["source"],
            image_path=d["image_path"],
            tamper_log=[TamperEntry.from_dict(t) for t in log] if log else None,
            split=d.get("split"),
        )


@dataclass(frozen=True)
class PairSample:
    """Ordered same-country pair with similarity label c (1 iff same class)."""

    a: DocumentRecord
    b: DocumentRecord
    c: int

    def __post_init__(self):
        if self.a.country != self.b.country:
            raise ValueError("pair members must share a country")
        expected = 1 if self.a.doc_class == self.b.doc_class else 0
        if self.c != expected:
            raise ValueError(f"label c={self.c} contradicts classes "
                             f"{self.a.doc_class}/{self.b.doc_class}")


@dataclass
class Manifest:
    """Immutable-by-convention catalog of document records."""

    records: list[DocumentRecord]
    created_with_seed: int = 0

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")
        tagged = [r for r in self.records if r.split is not None]
        if tagged and len(tagged) != len(self.records):
            raise ValueError("either every record has a split tag or none does")

    def __len__(self) -> int:
        return len(self.records)

    def countries(self) -> list[str]:
        return sorted({r.country for r in self.records})

    def select(self, country: str | None = None, doc_class: str | None = None,
               split: str | None = None, source: str | None = None) -> list[DocumentRecord]:
        out = []
        for r in self.records:
            if country is not None and r.country != country:
                continue
            if doc_class is not None and r.doc_class != doc_class:
                continue
            if split is not None and r.split != split:
                continue
            if source is not None and r.source != source:
                continue
            out.append(r)
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(
                {"format": MANIFEST_FORMAT, "seed": self.created_with_seed},
                sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        with open(path, encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise ManifestFormatError(f"unreadable manifest header: {exc}") from exc
            if header.get("format") != MANIFEST_FORMAT:
                raise ManifestFormatError(
                    f"unknown manifest format {header.get('format')!r}")
            records = [DocumentRecord.from_dict(json.loads(line))
                       for line in fh if line.strip()]
        return cls(records=records, created_with_seed=int(header.get("seed", 0)))


def _rng(seed: int, *keys) -> np.random.Generator:
    """Generator derived from the seed and stable string/int keys."""
    entropy = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            entropy.extend(key.encode())
        else:
            entropy.append(int(key))
    return np.random.default_rng(entropy)


# -- ingest ------------------------------------------------------------------

def ingest(root) -> Manifest:
    """Catalog a corpus directory: one genuine record per image.

    Country is inferred from the directory name; unknown country
    directories are skipped with a warning. Record ids are
    country/source/filename, so re-ingesting is deterministic.
    """
    root = Path(root)
    records: list[DocumentRecord] = []
    if root.is_dir():
        for country_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            country = country_dir.name.lower()
            if country not in COUNTRY_CODES:
                logger.warning("skipping unknown country directory %s", country_dir)
                continue
            for source, sub in (("template", "templates"), ("scan", "scans")):
                src_dir = country_dir / sub
                if not src_dir.is_dir():
                    continue
                for img in sorted(src_dir.iterdir()):
                    if img.suffix.lower() not in IMAGE_SUFFIXES:
                        continue
                    records.append(DocumentRecord(
                        id=f"{country}/{source}/{img.name}",
                        country=country,
                        doc_class="genuine",
                        source=source,
                        image_path=str(img),
                    ))
    if not records:
        raise EmptyCorpusError(f"no documents found under {root}")
    return Manifest(records=records)


def load_annotations(root) -> dict[str, list[Region]]:
    """Foreground rectangles per record id, from `annotations/<stem>.json` files."""
    root = Path(root)
    out: dict[str, list[Region]] = {}
    for country_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ann_dir = country_dir / "annotations"
        if not ann_dir.is_dir():
            continue
        country = country_dir.name.lower()
        for source, sub in (("template", "templates"), ("scan", "scans")):
            src_dir = country_dir / sub
            if not src_dir.is_dir():
                continue
            for img in sorted(src_dir.iterdir()):
                if img.suffix.lower() not in IMAGE_SUFFIXES:
                    continue
                ann = ann_dir / (img.stem + ".json")
                if ann.is_file():
                    with open(ann, encoding="utf-8") as fh:
                        rects = json.load(fh)
                    out[f"{country}/{source}/{img.name}"] = [
                        Region.from_dict(r) for r in rects
                    ]
    return out


# -- forged-set generation ----------------------------------------------------

@dataclass
class ForgeryReport:
    """Per-document outcome of a forged-set generation run."""

    candidate_counts: dict[str, int] = field(default_factory=dict)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"candidate_counts": self.candidate_counts,
                "skipped": [list(s) for s in self.skipped]}


def generate_forged_set(
    manifest: Manifest,
    out_root,
    n: int = 64,
    zones_per_doc: int = 1,
    annotations: dict[str, list[Region]] | None = None,
    seed: int = 0,
) -> tuple[Manifest, ForgeryReport]:
    """Create one copy-move forged counterpart per genuine record.

    Per document: partition into n x n blocks, select tamper-safe zones
    (annotation-driven when `annotations` has the record id, heuristic
    otherwise), draw `zones_per_doc` disjoint (src, dst) block pairs from
    the document's own seeded stream, apply the copy-moves sequentially
    and write the result under `out_root/<country>/forged/`. Documents
    without enough candidate blocks are skipped and listed in the report.
    """
    if zones_per_doc < 1:
        raise ValueError("zones_per_doc must be >= 1")
    if any(r.doc_class != "genuine" for r in manifest.records):
        raise ValueError("generate_forged_set expects a manifest of genuine records")
    out_root = Path(out_root)
    report = ForgeryReport()
    forged_records: list[DocumentRecord] = []
    for rec in sorted(manifest.records, key=lambda r: r.id):
        img = imaging.load_grayscale(rec.image_path)
        grid = imaging.partition_blocks(img, n)
        foreground = annotations.get(rec.id) if annotations is not None else None
        candidates = imaging.select_candidate_zones(img, grid, foreground)
        report.candidate_counts[rec.id] = len(candidates)
        needed = 2 * zones_per_doc
        if len(candidates) < needed:
            reason = (f"{len(candidates)} candidate zones, "
                      f"{needed} needed for {zones_per_doc} copy-moves")
            report.skipped.append((rec.id, reason))
            logger.warning("no usable tamper zones for %s: %s", rec.id, reason)
            continue
        rng = _rng(seed, rec.id)
        chosen = rng.choice(len(candidates), size=needed, replace=False)
        log: list[TamperEntry] = []
        tampered = img
        for z in range(zones_per_doc):
            src = grid.region(candidates[chosen[2 * z]])
            dst = grid.region(candidates[chosen[2 * z + 1]])
            tampered = imaging.copy_move(tampered, src, dst)
            log.append(TamperEntry(src=src, dst=dst, block_size=n))
        stem = Path(rec.image_path).stem
        forged_dir = out_root / rec.country / "forged"
        forged_dir.mkdir(parents=True, exist_ok=True)
        forged_path = forged_dir / f"{stem}_f.png"
        imaging.save_png(tampered, forged_path)
        forged_records.append(DocumentRecord(
            id=f"{rec.country}/{rec.source}/{stem}_f.png",
            country=rec.country,
            doc_class="forged",
            source=rec.source,
            image_path=str(forged_path),
            tamper_log=log,
        ))
    combined = list(manifest.records) + forged_records
    return Manifest(records=combined, created_with_seed=seed), report


# -- split ---------------------------------------------------------------------

def split(manifest: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Stratified train/test assignment per (country, doc_class).

    Each stratum's train count is floor or ceil of fraction*size (largest
    remainders rounded up until the global count matches round(fraction*N)),
    clamped so both splits stay non-empty. Deterministic per seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    strata: dict[tuple[str, str], list[DocumentRecord]] = {}
    for rec in manifest.records:
        strata.setdefault((rec.country, rec.doc_class), []).append(rec)
    for key, members in strata.items():
        if len(members) < 2:
            raise StratumTooSmallError(
                f"stratum {key} has {len(members)} record(s); need at least 2")
    total_target = round(train_fraction * len(manifest.records))
    quotas: dict[tuple[str, str], int] = {}
    remainders = []
    for key in sorted(strata):
        exact = train_fraction * len(strata[key])
        quotas[key] = int(exact)
        remainders.append((-(exact - int(exact)), key))
    extras = total_target - sum(quotas.values())
    for _, key in sorted(remainders)[: max(extras, 0)]:
        quotas[key] += 1
    assignment: dict[str, str] = {}
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda r: r.id)
        k = min(max(quotas[key], 1), len(members) - 1)
        order = _rng(seed, key[0], key[1]).permutation(len(members))
        for pos, idx in enumerate(order):
            assignment[members[idx].id] = "train" if pos < k else "test"
    tagged = [DocumentRecord(
        id=r.id, country=r.country, doc_class=r.doc_class, source=r.source,
        image_path=r.image_path, tamper_log=r.tamper_log,
        split=assignment[r.id],
    ) for r in manifest.records]
    return Manifest(records=tagged, created_with_seed=manifest.created_with_seed)


# -- pair sampling ---------------------------------------------------------------

def sample_pairs(
    manifest: Manifest,
    country: str,
    n_similar: int,
    n_dissimilar: int,
    split: str | None = None,
    seed: int = 0,
    mix_sources: bool = False,
) -> list[PairSample]:
    """Sample labeled pairs for one country (and optionally one split).

    Similar pairs (c=1) draw two distinct documents of one class,
    dissimilar pairs (c=0) one genuine plus one forged; by default both
    members come from the same source (template or scan). Sampling is
    without replacement within a pair and with replacement across pairs,
    deterministic per seed.
    """
    pool = manifest.select(country=country, split=split)
    genuine = sorted((r for r in pool if r.doc_class == "genuine"), key=lambda r: r.id)
    forged = sorted((r for r in pool if r.doc_class == "forged"), key=lambda r: r.id)
    if len(genuine) < 2 or len(forged) < 2:
        raise InsufficientDocumentsError(
            f"country {country!r} (split={split}) has {len(genuine)} genuine / "
            f"{len(forged)} forged documents; need at least 2 of each")

    def by_source(records):
        groups: dict[str, list[DocumentRecord]] = {}
        for r in records:
            groups.setdefault(r.source, []).append(r)
        return groups

    if mix_sources:
        similar_groups = [genuine, forged]
        dissimilar_groups = [(genuine, forged)]
    else:
        similar_groups = [g for recs in (genuine, forged)
                          for g in by_source(recs).values() if len(g) >= 2]
        gen_src = by_source(genuine)
        for_src = by_source(forged)
        dissimilar_groups = [(gen_src[s], for_src[s])
                             for s in sorted(set(gen_src) & set(for_src))]
    if n_similar > 0 and not similar_groups:
        raise InsufficientDocumentsError(
            f"country {country!r}: no class/source group with 2 documents")
    if n_dissimilar > 0 and not dissimilar_groups:
        raise InsufficientDocumentsError(
            f"country {country!r}: no source with both classes present")

    rng = _rng(seed, country, split or "all")
    pairs: list[PairSample] = []
    for _ in range(n_similar):
        group = similar_groups[rng.integers(len(similar_groups))]
        i, j = rng.choice(len(group), size=2, replace=False)
        pairs.append(PairSample(a=group[i], b=group[j], c=1))
    for _ in range(n_dissimilar):
        gens, fors = dissimilar_groups[rng.integers(len(dissimilar_groups))]
        g = gens[rng.integers(len(gens))]
        f = fors[rng.integers(len(fors))]
        pairs.append(PairSample(a=g, b=f, c=0))
    return pairs


# -- preprocessing -----------------------------------------------------------------

def preprocess(record: DocumentRecord, target_h: int, target_w: int) -> np.ndarray:
    """Load, resize and shape a document into a (1, H, W) input tensor."""
    img = imaging.load_grayscale(record.image_path)
    if (img.height, img.width) != (target_h, target_w):
        img = imaging.resize_bilinear(img, target_w, target_h)
    return img.pixels[None, :, :]


def make_preprocessor(target_h: int, target_w: int, cache: bool = True):
    """Preprocessing closure with an optional per-record-id tensor cache."""
    store: dict[str, np.ndarray] = {}

    def run(record: DocumentRecord) -> np.ndarray:
        if not cache:
            return preprocess(record, target_h, target_w)
        if record.id not in store:
            store[record.id] = preprocess(record, target_h, target_w)
        return store[record.id]

    return run


# -- synthetic corpus ---------------------------------------------------------------

def default_country_params(country_index: int) -> GuillocheParams:
    """Per-pseudo-country renderer parameters with distinct line geometry."""
    return GuillocheParams(
        curve_count=14 + 2 * country_index,
        amplitude=0.0,  # replaced per image size by write_synthetic_corpus
        frequency=2.5 + 0.75 * country_index,
        phase_jitter=np.pi,
        line_intensity=0.1,
        background_intensity=0.95,
        seed=0,
    )


def write_synthetic_corpus(
    root,
    countries=("fin", "grc", "svk"),
    docs_per_country: int = 20,
    width: int = 256,
    height: int = 256,
    seed: int = 0,
    params_by_country: dict[str, GuillocheParams] | None = None,
) -> Manifest:
    """Render a guilloche-only corpus in the standard layout and ingest it.

    Every document is pure background pattern, so each gets an empty
    annotation file (no foreground to avoid).
    """
    root = Path(root)
    for ci, country in enumerate(countries):
        if params_by_country is not None:
            base = params_by_country[country]
        else:
            base = default_country_params(ci)
        if base.amplitude == 0.0:
            base = GuillocheParams(
                curve_count=base.curve_count,
                amplitude=0.46 * height,
                frequency=base.frequency,
                phase_jitter=base.phase_jitter,
                line_intensity=base.line_intensity,
                background_intensity=base.background_intensity,
                seed=base.seed,
            )
        tdir = root / country / "templates"
        adir = root / country / "annotations"
        tdir.mkdir(parents=True, exist_ok=True)
        adir.mkdir(parents=True, exist_ok=True)
        stream = _rng(seed, country)
        for i in range(docs_per_country):
            doc_seed = int(stream.integers(0, 2**63))
            params = GuillocheParams(
                curve_count=base.curve_count,
                amplitude=base.amplitude,
                frequency=base.frequency,
                phase_jitter=base.phase_jitter,
                line_intensity=base.line_intensity,
                background_intensity=base.background_intensity,
                seed=doc_seed,
            )
            img = imaging.synth_guilloche(params, width, height)
            name = f"doc{i:03d}"
            imaging.save_png(img, tdir / f"{name}.png")
            with open(adir / f"{name}.json", "w", encoding="utf-8") as fh:
                fh.write("[]\n")
    manifest = ingest(root)
    return Manifest(records=manifest.records, created_with_seed=seed)
