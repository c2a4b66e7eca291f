from mathrec.data.builder import BuildConfig, build_manifest, read_corpus
from mathrec.data.manifest import (
    DEFAULT_BUCKETS,
    SUBSETS,
    FormulaSample,
    Manifest,
    bucket_index,
    load_manifest,
)
from mathrec.data.render import check_renderer, render_formula
from mathrec.data.sampling import dedup, length_balanced_sample

__all__ = [
    "BuildConfig", "DEFAULT_BUCKETS", "FormulaSample", "Manifest", "SUBSETS", "bucket_index",
    "build_manifest", "check_renderer", "dedup", "length_balanced_sample", "load_manifest",
    "read_corpus", "render_formula",
]
