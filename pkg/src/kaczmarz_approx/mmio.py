"""Matrix Market reading and writing for dense real matrices."""
import numpy as np
import scipy.io

from .matrix import as_matrix


def read_matrix(path) -> np.ndarray:
    """Read a real Matrix Market file (array or coordinate) into a dense matrix.

    Complex and pattern files are rejected.
    """
    try:
        rows, cols, _, fmt, field, _ = scipy.io.mminfo(path)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: not a Matrix Market file ({exc})") from exc
    if field not in ("real", "integer", "double"):
        raise ValueError(f"{path}: unsupported Matrix Market field {field!r}; need real")
    M = scipy.io.mmread(path)
    if hasattr(M, "toarray"):
        M = M.toarray()
    M = np.asarray(M, dtype=np.float64).reshape(rows, cols)
    return as_matrix(M)


def read_vector(path) -> np.ndarray:
    """Read a vector from Matrix Market (``m x 1`` or ``1 x m``) or plain whitespace text."""
    path = str(path)
    with open(path) as fh:
        head = fh.readline()
    if head.startswith("%%MatrixMarket"):
        v = read_matrix(path).ravel()
    else:
        v = np.loadtxt(path, dtype=np.float64, ndmin=1).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{path}: non-finite entries")
    return v


def write_matrix(path, A, comment=None) -> None:
    """Write ``A`` in array format, real general, 17 significant digits."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    scipy.io.mmwrite(path, A, comment=comment, field="real", precision=17, symmetry="general")
