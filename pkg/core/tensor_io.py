"""
Tensor IO Module
Formats sur disque: conteneur de tenseurs BDT1, images PGM 8 bits, CSV,
écritures atomiques (fichier temporaire puis renommage)
"""
import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
from PIL import Image

from core.errors import ContainerFormatError, InvalidRangeError

MAGIC = b"BDT1"
TAG_BITS = 0
TAG_FLOAT64 = 1
# magic + tag + rang
FIXED_HEADER = len(MAGIC) + 2


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    """Écrit dans un fichier temporaire du même répertoire puis renomme"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, "wb") as stream:
            stream.write(payload)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# ------------------------------------------------------------------- BDT1

def _is_bit_tensor(array: np.ndarray) -> bool:
    if array.dtype == np.bool_:
        return True
    return array.dtype == np.uint8 and bool(np.all(array <= 1))


def encode_tensor(array: np.ndarray) -> bytes:
    """
    Sérialise un tenseur au format BDT1

    Les tableaux bool / uint8 binaires sont compactés (8 bits par octet,
    bit de poids fort d'abord); tout le reste est écrit en float64.
    """
    array = np.asarray(array)
    if array.ndim > 255:
        raise InvalidRangeError(f"rank {array.ndim} exceeds container limit")
    if _is_bit_tensor(array):
        tag = TAG_BITS
        payload = np.packbits(array.astype(np.uint8).reshape(-1), bitorder="big").tobytes()
    else:
        tag = TAG_FLOAT64
        payload = np.ascontiguousarray(array, dtype="<f8").tobytes()
    header = MAGIC + bytes([tag, array.ndim]) + np.asarray(array.shape, dtype="<u8").tobytes()
    return header + payload


def decode_tensor(data: bytes) -> np.ndarray:
    """Inverse de encode_tensor; vérifie en-tête et longueur exacte"""
    if len(data) < FIXED_HEADER or data[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError("missing BDT1 magic")
    tag, rank = data[len(MAGIC)], data[len(MAGIC) + 1]
    dims_end = FIXED_HEADER + 8 * rank
    if len(data) < dims_end:
        raise ContainerFormatError("truncated BDT1 header")
    shape = tuple(int(d) for d in np.frombuffer(data[FIXED_HEADER:dims_end], dtype="<u8"))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = data[dims_end:]

    if tag == TAG_BITS:
        expected = (count + 7) // 8
        if len(payload) != expected:
            raise ContainerFormatError(f"bit payload has {len(payload)} bytes, expected {expected}")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count, bitorder="big")
        return bits.reshape(shape)
    if tag == TAG_FLOAT64:
        expected = 8 * count
        if len(payload) != expected:
            raise ContainerFormatError(f"float payload has {len(payload)} bytes, expected {expected}")
        return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    raise ContainerFormatError(f"unknown dtype tag {tag}")


def write_tensor(path: Path, array: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_tensor(array))


def read_tensor(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ContainerFormatError(f"cannot read {path}: {e}") from e
    return decode_tensor(data)


def write_stack(path: Path, items: Sequence[np.ndarray]) -> Path:
    """Écrit une liste de tenseurs de même forme en un seul tenseur (N, ...)"""
    return write_tensor(path, np.stack([np.asarray(item) for item in items]))


def read_stack(path: Path) -> List[np.ndarray]:
    return list(read_tensor(path))


# -------------------------------------------------------------------- PGM

def to_gray8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: Path, image: np.ndarray) -> Path:
    """Écrit une image (h, w) dans [0, 1] en PGM binaire 8 bits"""
    image = np.asarray(image)
    if image.ndim != 2:
        raise InvalidRangeError(f"PGM expects a 2D image, got shape {image.shape}")
    buffer = io.BytesIO()
    Image.fromarray(to_gray8(image)).save(buffer, format="PPM")
    return atomic_write_bytes(path, buffer.getvalue())


def read_pgm(path: Path) -> np.ndarray:
    """Lit un PGM 8 bits → (h, w) dans [0, 1]"""
    try:
        with Image.open(path) as handle:
            if handle.mode != "L":
                raise ContainerFormatError(f"{path} is not an 8-bit graymap")
            return np.asarray(handle, dtype=np.float64) / 255.0
    except OSError as e:
        raise ContainerFormatError(f"cannot read {path}: {e}") from e


def write_image_channels(directory: Path, stem: str, image: np.ndarray) -> List[Path]:
    """Un PGM par canal: <stem>.pgm (1 canal) ou <stem>_c<k>.pgm"""
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[None]
    if image.shape[0] == 1:
        return [write_pgm(Path(directory) / f"{stem}.pgm", image[0])]
    return [
        write_pgm(Path(directory) / f"{stem}_c{channel}.pgm", image[channel])
        for channel in range(image.shape[0])
    ]


def display_normalize(image: np.ndarray) -> np.ndarray:
    """Étire une carte réelle sur [0, 1] pour l'affichage"""
    image = np.asarray(image, dtype=np.float64)
    high = float(image.max()) if image.size else 0.0
    return image / high if high > 0.0 else np.zeros_like(image)


# -------------------------------------------------------------------- CSV

def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Dict[str, str]]) -> Path:
    """CSV déterministe (ordre des colonnes fixe, fins de ligne \\n)"""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return atomic_write_text(path, buffer.getvalue())


def read_csv(path: Path) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as stream:
        return list(csv.DictReader(stream))
