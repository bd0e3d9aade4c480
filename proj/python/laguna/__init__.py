"""Python bindings for the LAGUNA domain-adaptation toolkit."""

from ._laguna import (
    LagunaError,
    __version__,
    cholesky_logdet,
    generate,
    gram_logdet,
    load_embeddings,
    rel,
    run_cli,
    sha256_file,
    write_embeddings,
)

__all__ = [
    "LagunaError",
    "__version__",
    "cholesky_logdet",
    "generate",
    "gram_logdet",
    "load_embeddings",
    "rel",
    "run_cli",
    "sha256_file",
    "write_embeddings",
]
