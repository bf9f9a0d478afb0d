"""Utilities module.

Exception hierarchy shared by the whole package plus the small file helpers
used to read and write problem documents, configurations and manifests.
"""
import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np
import toml

__all__ = [
    "BlockPDError",
    "DomainError",
    "InvalidSlaterPointError",
    "DiagonalDominanceError",
    "EvaluationError",
    "StepsizeError",
    "ProtocolViolationError",
    "InfeasibleToleranceError",
    "SchemaError",
    "CertificateError",
    "load_document",
    "dump_document",
    "file_sha256",
    "check_partition",
    "partition_from_sizes",
]

logger = logging.getLogger(__name__)


class BlockPDError(Exception):
    """Base class for every error raised by blockpd."""

    pass


class DomainError(BlockPDError, ValueError):
    """An input lies outside its admissible set (X, M, a partition...)."""

    pass


class InvalidSlaterPointError(DomainError):
    """The supplied Slater point does not satisfy g(x) < 0 strictly."""

    pass


class DiagonalDominanceError(BlockPDError, ValueError):
    """The Hessian of the Lagrangian is not diagonally dominant on X x M.

    Regularizing the Lagrangian in the primal variable would restore the
    property, but no parameter guidance exists for it, so such problems are
    rejected instead.
    """

    pass


class EvaluationError(BlockPDError, ArithmeticError):
    """A user evaluator returned non-finite values."""

    pass


class StepsizeError(BlockPDError, ValueError):
    """A stepsize violates its admissible range."""

    pass


class ProtocolViolationError(BlockPDError, RuntimeError):
    """An agent was driven against the asynchronous protocol."""

    pass


class InfeasibleToleranceError(BlockPDError, ValueError):
    """The requested error bound cannot be met by any regularization.

    Parameters
    ----------
    message : str
        Human readable description.
    frontier : float
        Smallest asynchrony-penalty bound reachable inside the search range.
    """

    def __init__(self, message, frontier=None):
        super().__init__(message)
        self.frontier = frontier


class SchemaError(BlockPDError, ValueError):
    """A document could not be parsed against its schema.

    Parameters
    ----------
    message : str
        What is wrong.
    location : str, optional
        Where it is wrong, e.g. ``problem.json:objective.kind``.
    """

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location


class CertificateError(BlockPDError, ValueError):
    """One of the contraction certificate conditions failed."""

    pass


def load_document(file_name):
    """Load a JSON or TOML document into a dictionary.

    The format is chosen from the file extension; ``.json`` is the default.

    Parameters
    ----------
    file_name : str or pathlib.Path
        Path to the document.

    Returns
    -------
    dict
        The parsed document.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    SchemaError
        If the file does not parse. JSON errors carry the line number.

    Examples
    --------
    >>> import tempfile, os
    >>> path = os.path.join(tempfile.mkdtemp(), "doc.toml")
    >>> dump_document({"simulation": {"seed": 3}}, path)
    >>> load_document(path)
    {'simulation': {'seed': 3}}
    """
    path = Path(file_name)
    with open(path, "r") as f:
        text = f.read()

    if path.suffix.lower() == ".toml":
        try:
            return toml.loads(text)
        except toml.TomlDecodeError as err:
            raise SchemaError(str(err), location=f"{path.name}:{err.lineno}")

    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(err.msg, location=f"{path.name}:{err.lineno}")


def dump_document(data, file_name):
    """Dump a dictionary as JSON or TOML depending on the extension.

    Parameters
    ----------
    data : dict
        Data to be written. numpy arrays and scalars are converted.
    file_name : str, pathlib.Path or file object
        Destination path. An open text stream receives JSON.
    """
    data = _to_builtin(data)
    if hasattr(file_name, "write"):
        json.dump(data, file_name, indent=2)
        file_name.write("\n")
        return
    path = Path(file_name)
    with open(path, "w") as f:
        if path.suffix.lower() == ".toml":
            toml.dump(data, f)
        else:
            json.dump(data, f, indent=2, sort_keys=False)
            f.write("\n")


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {str(k): _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_builtin(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    return obj


def file_sha256(file_name):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(file_name, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def partition_from_sizes(sizes):
    """Build an ordered contiguous partition from block sizes.

    Parameters
    ----------
    sizes : list of int
        Block sizes.

    Returns
    -------
    list of list of int
        Index blocks.

    Examples
    --------
    >>> partition_from_sizes([2, 1, 3])
    [[0, 1], [2], [3, 4, 5]]
    """
    blocks = []
    start = 0
    for size in sizes:
        blocks.append(list(range(start, start + int(size))))
        start += int(size)
    return blocks


def check_partition(partition, size, name="partition"):
    """Validate that index blocks are disjoint, ordered and cover range(size).

    Parameters
    ----------
    partition : list of list of int
        Index blocks.
    size : int
        Size of the index range that must be covered.
    name : str, optional
        Used in error messages.

    Returns
    -------
    list of numpy.ndarray
        The blocks as sorted integer arrays.

    Raises
    ------
    DomainError
        If the blocks overlap, leave indices out, or are empty.

    Examples
    --------
    >>> check_partition([[1], [0]], 2)
    Traceback (most recent call last):
    ...
    blockpd.utils.DomainError: partition blocks must be ordered
    """
    blocks = [np.asarray(sorted(int(i) for i in block), dtype=int) for block in partition]
    if size == 0:
        return blocks
    if any(len(block) == 0 for block in blocks):
        raise DomainError(f"{name} contains an empty block")

    flat = np.concatenate(blocks) if blocks else np.array([], dtype=int)
    if len(np.unique(flat)) != len(flat):
        raise DomainError(f"{name} blocks are not disjoint")
    if len(flat) != size or not np.array_equal(np.sort(flat), np.arange(size)):
        raise DomainError(f"{name} does not cover all {size} indices")
    if any(blocks[k][0] < blocks[k - 1][0] for k in range(1, len(blocks))):
        raise DomainError(f"{name} blocks must be ordered")

    return blocks
