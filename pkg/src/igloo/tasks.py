"""Task data: synthetic sequence benchmarks and dataset loaders.

Copy memory, the adding problem, MNIST digit rows as 784-step sequences
(optionally under a fixed pixel permutation), and a character-level corpus
loader, plus generators that write data files for the CLI.
"""

import gzip
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError

COPY_SYMBOLS = 8          # payload alphabet 1..8; 0 is blank, 9 is the recall marker
COPY_PAYLOAD = 10         # symbols to memorize, and to reproduce after the marker
COPY_MARKER = 9


def one_hot(indices, depth, dtype=np.float64):
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (depth,), dtype=dtype)
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out


def gen_copy_memory(delay, n, rng):
    """Copy-memory sequences of length delay + 20.

    Ten symbols from {1..8} open the sequence, blanks fill the delay, the
    marker 9 fires at index delay + 9, and ten trailing blanks leave room to
    answer. Targets are the ten opening symbols as classes 0..7; a model
    answers over the final ten positions.
    """
    if delay < 1:
        raise ConfigError(f"copy delay must be >= 1, got {delay}")
    length = delay + 2 * COPY_PAYLOAD
    inputs = np.zeros((n, length), dtype=np.int64)
    inputs[:, :COPY_PAYLOAD] = rng.integers(1, COPY_SYMBOLS + 1, size=(n, COPY_PAYLOAD))
    inputs[:, delay + COPY_PAYLOAD - 1] = COPY_MARKER
    targets = inputs[:, :COPY_PAYLOAD] - 1
    return inputs, targets


def gen_addition(length, n, rng):
    """Adding-problem sequences: (n, length, 2) inputs, (n, 1) targets.

    Channel 0 is uniform noise in [0, 1); channel 1 marks exactly two
    distinct positions; the target is the sum of the two marked values.
    """
    if length < 2:
        raise ConfigError(f"addition length must be >= 2, got {length}")
    values = rng.random((n, length))
    # two distinct uniform positions per row, via the two smallest of a random draw
    pos = np.argpartition(rng.random((n, length)), 1, axis=1)[:, :2]
    markers = np.zeros((n, length))
    rows = np.arange(n)[:, None]
    markers[rows, pos] = 1.0
    inputs = np.stack([values, markers], axis=2)
    targets = values[rows, pos].sum(axis=1, keepdims=True)
    return inputs, targets


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count, path, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(
            f"{path}: truncated while reading {what} ({len(buf)} of {count} bytes)"
        )
    return buf


def _read_idx(path, magic, n_dims, what):
    with _open_maybe_gzip(path) as fh:
        header = np.frombuffer(
            _read_exact(fh, 4 * (1 + n_dims), path, "header"), dtype=">u4"
        )
        if header[0] != magic:
            raise FormatError(
                f"{path}: bad magic 0x{header[0]:08x}, expected 0x{magic:08x} for {what}"
            )
        dims = header[1:].astype(np.int64)
        payload = _read_exact(fh, int(np.prod(dims)), path, what)
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


@dataclass
class DigitSequences:
    """Images flattened to pixel sequences: inputs (n, 784, 1) in [0, 1]."""

    inputs: np.ndarray
    labels: np.ndarray
    permutation: np.ndarray | None = None


def load_mnist_idx(images_path, labels_path):
    """Load an IDX image/label file pair (gzipped or raw) as DigitSequences."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path} holds {images.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels"
        )
    n = images.shape[0]
    inputs = images.reshape(n, -1, 1).astype(np.float64) / 255.0
    return DigitSequences(inputs=inputs, labels=labels.astype(np.int64))


def apply_permutation(seq, seed, permutation=None):
    """Shuffle pixel order with one fixed permutation shared by all samples.

    The permutation is drawn from `seed` unless given explicitly (tests use
    an identity or inverse array); it is stored on the returned object.
    """
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(seq.inputs.shape[1])
    else:
        permutation = np.asarray(permutation, dtype=np.int64)
        if sorted(permutation.tolist()) != list(range(seq.inputs.shape[1])):
            raise DataError("permutation must be a bijection on pixel positions")
    return DigitSequences(
        inputs=seq.inputs[:, permutation], labels=seq.labels, permutation=permutation
    )


# 5x7 bitmap digit glyphs for the synthetic digit generator
_GLYPHS = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00110", "01000", "10000", "11111"],
    3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def _render_digit(digit, rng):
    glyph = np.array([[int(c) for c in row] for row in _GLYPHS[digit]], dtype=np.float64)
    canvas = np.zeros((28, 28))
    scaled = np.kron(glyph, np.ones((3, 3)))            # 21 x 15
    top = 3 + rng.integers(-2, 3)
    left = 6 + rng.integers(-3, 4)
    canvas[top:top + 21, left:left + 15] = scaled
    canvas *= rng.uniform(0.6, 1.0)
    canvas += rng.normal(0.0, 0.08, size=canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def _write_idx_images(path, images_u8):
    n = images_u8.shape[0]
    with open(path, "wb") as fh:
        fh.write(np.array([IDX_IMAGES_MAGIC, n, 28, 28], dtype=">u4").tobytes())
        fh.write(images_u8.tobytes())


def _write_idx_labels(path, labels_u8):
    with open(path, "wb") as fh:
        fh.write(np.array([IDX_LABELS_MAGIC, labels_u8.shape[0]], dtype=">u4").tobytes())
        fh.write(labels_u8.tobytes())


def gen_digits_idx(out_dir, n_train, n_test, rng):
    """Write synthetic bitmap-font digit data as IDX files under out_dir.

    Produces the standard four-file layout (train/t10k images and labels) so
    the IDX loader path is exercised without external downloads.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    names = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train),
        "t10k": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test),
    }
    paths = {}
    for split, (img_name, lbl_name, n) in names.items():
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        images = np.stack([_render_digit(int(d), rng) for d in labels])
        img_path = os.path.join(out_dir, img_name)
        lbl_path = os.path.join(out_dir, lbl_name)
        _write_idx_images(img_path, (images * 255).astype(np.uint8))
        _write_idx_labels(lbl_path, labels)
        paths[split] = (img_path, lbl_path)
    return paths


@dataclass
class CharCorpus:
    """Character windows: inputs (n, L) int codes, targets shifted by one."""

    train_inputs: np.ndarray
    train_targets: np.ndarray
    test_inputs: np.ndarray
    test_targets: np.ndarray
    vocab: str

    @property
    def vocab_size(self):
        return len(self.vocab)


def load_char_corpus(path, window, train_frac=0.9):
    """Split a text file into non-overlapping next-char prediction windows.

    The vocabulary comes from the training split alone; test characters
    outside it are an error rather than a silent remap.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if not text:
        raise DataError(f"{path} is empty")
    cut = int(len(text) * train_frac)
    train_text, test_text = text[:cut], text[cut:]
    vocab = "".join(sorted(set(train_text)))
    if len(train_text) < window + 1 or len(test_text) < window + 1:
        raise DataError(
            f"{path}: need at least {window + 1} characters per split, got "
            f"{len(train_text)} train / {len(test_text)} test"
        )
    unknown = sorted(set(test_text) - set(vocab))
    if unknown:
        raise DataError(
            f"{path}: test split has characters missing from the training "
            f"vocabulary: {unknown!r}"
        )
    lookup = {c: i for i, c in enumerate(vocab)}

    def windows(chunk):
        codes = np.array([lookup[c] for c in chunk], dtype=np.int64)
        n = (len(codes) - 1) // window
        codes = codes[: n * window + 1]
        inputs = codes[:-1].reshape(n, window)
        targets = codes[1:].reshape(n, window)
        return inputs, targets

    tr_in, tr_tg = windows(train_text)
    te_in, te_tg = windows(test_text)
    return CharCorpus(tr_in, tr_tg, te_in, te_tg, vocab)


def gen_char_corpus(path, n_chars, rng):
    """Write a synthetic character stream with strong bigram structure.

    Each ordered character pair allows only three successors with skewed
    probabilities, so the per-step entropy rate sits far below the uniform
    log(vocab) ceiling while single-character frequencies stay near flat.
    """
    alphabet = "abcdefghijklmnop"
    v = len(alphabet)
    for attempt in range(16):
        table_rng = np.random.default_rng(rng.integers(0, 2**63) + attempt)
        nxt = np.empty((v, v, 3), dtype=np.int64)
        for a in range(v):
            for b in range(v):
                nxt[a, b] = table_rng.permutation(v)[:3]
        probs = np.array([0.7, 0.2, 0.1])
        state = (0, 1)
        picks = rng.choice(3, size=n_chars, p=probs)
        out = np.empty(n_chars, dtype=np.int64)
        for i in range(n_chars):
            c = nxt[state[0], state[1], picks[i]]
            out[i] = c
            state = (state[1], c)
        text = "".join(alphabet[c] for c in out)
        cut = int(n_chars * 0.9)
        if set(text[:cut]) == set(alphabet) and set(text[cut:]) <= set(text[:cut]):
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
            return path
    raise DataError("could not generate a corpus covering the full alphabet")
