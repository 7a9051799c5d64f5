"""Byte-mode QR encoder (versions 1-10, error-correction level L).

Enough of ISO/IEC 18004 to turn an invitation URL into a scannable code:
data encoding, Reed-Solomon EC over GF(2^8), block interleaving, the
eight mask patterns with penalty scoring, and format/version info. The
test suite round-trips the output through an independent decoder.
"""

from __future__ import annotations

from .storage.gf256 import EXP, gf_mul

# version -> (total_data_codewords, ec_per_block, [(block_total, block_data), ...])
_VERSION_L = {
    1: (19, 7, [(26, 19)]),
    2: (34, 10, [(44, 34)]),
    3: (55, 15, [(70, 55)]),
    4: (80, 20, [(100, 80)]),
    5: (108, 26, [(134, 108)]),
    6: (136, 18, [(86, 68), (86, 68)]),
    7: (156, 20, [(98, 78), (98, 78)]),
    8: (194, 24, [(121, 97), (121, 97)]),
    9: (232, 30, [(146, 116), (146, 116)]),
    10: (274, 18, [(86, 68), (86, 68), (87, 69), (87, 69)]),
}

_ALIGNMENT = {
    1: [],
    2: [6, 18],
    3: [6, 22],
    4: [6, 26],
    5: [6, 30],
    6: [6, 34],
    7: [6, 22, 38],
    8: [6, 24, 42],
    9: [6, 26, 46],
    10: [6, 28, 50],
}

_FORMAT_MASK = 0b101010000010010
_EC_L_BITS = 0b01


def _rs_generator(degree: int) -> list[int]:
    gen = [1]
    for i in range(degree):
        nxt = [0] * (len(gen) + 1)
        for j, coeff in enumerate(gen):
            nxt[j] ^= gf_mul(coeff, EXP[i])
            nxt[j + 1] ^= coeff
        gen = nxt
    return gen  # lowest degree first


def _rs_ec_codewords(data: list[int], degree: int) -> list[int]:
    gen = _rs_generator(degree)[::-1]  # highest degree first, monic
    rem = list(data) + [0] * degree
    for i in range(len(data)):
        factor = rem[i]
        if factor == 0:
            continue
        for j in range(1, degree + 1):
            rem[i + j] ^= gf_mul(factor, gen[j])
    return rem[len(data):]


def _pick_version(payload_len: int) -> int:
    for version, (data_cw, _, _) in _VERSION_L.items():
        count_bits = 8 if version <= 9 else 16
        needed_bits = 4 + count_bits + payload_len * 8
        if needed_bits <= data_cw * 8:
            return version
    raise ValueError(f"payload of {payload_len} bytes exceeds version 10-L capacity")


def _encode_codewords(payload: bytes, version: int) -> list[int]:
    data_cw, _, _ = _VERSION_L[version]
    count_bits = 8 if version <= 9 else 16
    bits: list[int] = []

    def push(value: int, width: int) -> None:
        for shift in range(width - 1, -1, -1):
            bits.append((value >> shift) & 1)

    push(0b0100, 4)  # byte mode
    push(len(payload), count_bits)
    for byte in payload:
        push(byte, 8)
    push(0, min(4, data_cw * 8 - len(bits)))  # terminator
    while len(bits) % 8:
        bits.append(0)
    codewords = [
        int("".join(map(str, bits[i : i + 8])), 2) for i in range(0, len(bits), 8)
    ]
    pad = (0xEC, 0x11)
    i = 0
    while len(codewords) < data_cw:
        codewords.append(pad[i % 2])
        i += 1
    return codewords


def _interleave(codewords: list[int], version: int) -> list[int]:
    _, ec_len, blocks = _VERSION_L[version]
    data_blocks = []
    ec_blocks = []
    offset = 0
    for _total, block_data in blocks:
        chunk = codewords[offset : offset + block_data]
        offset += block_data
        data_blocks.append(chunk)
        ec_blocks.append(_rs_ec_codewords(chunk, ec_len))
    out = []
    for i in range(max(len(b) for b in data_blocks)):
        for block in data_blocks:
            if i < len(block):
                out.append(block[i])
    for i in range(ec_len):
        for block in ec_blocks:
            out.append(block[i])
    return out


class _Matrix:
    def __init__(self, size: int) -> None:
        self.size = size
        self.cells = [[0] * size for _ in range(size)]
        self.reserved = [[False] * size for _ in range(size)]

    def set(self, row: int, col: int, value: int, reserve: bool = True) -> None:
        self.cells[row][col] = value
        if reserve:
            self.reserved[row][col] = True


def _place_finder(m: _Matrix, row: int, col: int) -> None:
    for r in range(-1, 8):
        for c in range(-1, 8):
            rr, cc = row + r, col + c
            if not (0 <= rr < m.size and 0 <= cc < m.size):
                continue
            inside = 0 <= r <= 6 and 0 <= c <= 6
            dark = inside and (r in (0, 6) or c in (0, 6) or (2 <= r <= 4 and 2 <= c <= 4))
            m.set(rr, cc, 1 if dark else 0)


def _build_matrix(version: int, codewords: list[int], mask: int) -> _Matrix:
    size = 17 + 4 * version
    m = _Matrix(size)
    _place_finder(m, 0, 0)
    _place_finder(m, 0, size - 7)
    _place_finder(m, size - 7, 0)

    centers = _ALIGNMENT[version]
    for r in centers:
        for c in centers:
            if m.reserved[r][c]:
                continue
            for dr in range(-2, 3):
                for dc in range(-2, 3):
                    dark = max(abs(dr), abs(dc)) != 1
                    m.set(r + dr, c + dc, 1 if dark else 0)

    for i in range(8, size - 8):  # timing patterns
        if not m.reserved[6][i]:
            m.set(6, i, (i + 1) % 2)
        if not m.reserved[i][6]:
            m.set(i, 6, (i + 1) % 2)

    m.set(size - 8, 8, 1)  # dark module

    # Reserve format info areas (filled later).
    for i in range(9):
        if i != 6:
            if not m.reserved[8][i]:
                m.set(8, i, 0)
            if not m.reserved[i][8]:
                m.set(i, 8, 0)
    for i in range(8):
        if not m.reserved[8][size - 1 - i]:
            m.set(8, size - 1 - i, 0)
        if not m.reserved[size - 1 - i][8]:
            m.set(size - 1 - i, 8, 0)

    if version >= 7:  # version info blocks
        vbits = _version_bits(version)
        for i in range(18):
            bit = (vbits >> i) & 1
            m.set(i // 3, size - 11 + i % 3, bit)
            m.set(size - 11 + i % 3, i // 3, bit)

    # Zig-zag data placement with masking.
    bits = []
    for cw in codewords:
        for shift in range(7, -1, -1):
            bits.append((cw >> shift) & 1)
    bit_index = 0
    col = size - 1
    upward = True
    while col > 0:
        if col == 6:
            col -= 1
        rows = range(size - 1, -1, -1) if upward else range(size)
        for row in rows:
            for c in (col, col - 1):
                if m.reserved[row][c]:
                    continue
                bit = bits[bit_index] if bit_index < len(bits) else 0
                bit_index += 1
                if _mask_hit(mask, row, c):
                    bit ^= 1
                m.cells[row][c] = bit
        upward = not upward
        col -= 2

    _write_format(m, mask)
    return m


def _mask_hit(mask: int, r: int, c: int) -> bool:
    if mask == 0:
        return (r + c) % 2 == 0
    if mask == 1:
        return r % 2 == 0
    if mask == 2:
        return c % 3 == 0
    if mask == 3:
        return (r + c) % 3 == 0
    if mask == 4:
        return (r // 2 + c // 3) % 2 == 0
    if mask == 5:
        return (r * c) % 2 + (r * c) % 3 == 0
    if mask == 6:
        return ((r * c) % 2 + (r * c) % 3) % 2 == 0
    return ((r + c) % 2 + (r * c) % 3) % 2 == 0


def _bch(value: int, poly: int, bits: int) -> int:
    out = value << bits
    top = poly.bit_length()
    while out.bit_length() >= top:
        out ^= poly << (out.bit_length() - top)
    return out


def _format_bits(mask: int) -> int:
    data = (_EC_L_BITS << 3) | mask
    return ((data << 10) | _bch(data, 0b10100110111, 10)) ^ _FORMAT_MASK


def _version_bits(version: int) -> int:
    return (version << 12) | _bch(version, 0b1111100100101, 12)


def _write_format(m: _Matrix, mask: int) -> None:
    bits = _format_bits(mask)
    size = m.size
    coords_a = [
        (8, 0), (8, 1), (8, 2), (8, 3), (8, 4), (8, 5), (8, 7), (8, 8),
        (7, 8), (5, 8), (4, 8), (3, 8), (2, 8), (1, 8), (0, 8),
    ]
    coords_b = [(size - 1 - i, 8) for i in range(7)] + [(8, size - 8 + i) for i in range(8)]
    for i in range(15):
        bit = (bits >> (14 - i)) & 1
        m.cells[coords_a[i][0]][coords_a[i][1]] = bit
        m.cells[coords_b[i][0]][coords_b[i][1]] = bit


def _penalty(m: _Matrix) -> int:
    size, grid = m.size, m.cells
    score = 0
    for lines in (grid, list(zip(*grid))):  # rule 1: runs of 5+
        for line in lines:
            run = 1
            for i in range(1, size):
                if line[i] == line[i - 1]:
                    run += 1
                else:
                    if run >= 5:
                        score += 3 + run - 5
                    run = 1
            if run >= 5:
                score += 3 + run - 5
    for r in range(size - 1):  # rule 2: 2x2 blocks
        for c in range(size - 1):
            if grid[r][c] == grid[r][c + 1] == grid[r + 1][c] == grid[r + 1][c + 1]:
                score += 3
    pattern = (1, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0)
    for lines in (grid, list(zip(*grid))):  # rule 3: finder-like runs
        for line in lines:
            for i in range(size - 10):
                window = tuple(line[i : i + 11])
                if window == pattern or window == pattern[::-1]:
                    score += 40
    dark = sum(sum(row) for row in grid)
    ratio = dark * 100 // (size * size)
    score += abs(ratio - 50) // 5 * 10
    return score


def encode_matrix(payload: str | bytes) -> list[list[int]]:
    """Encode payload into a QR module matrix (1 = dark)."""
    raw = payload.encode("utf-8") if isinstance(payload, str) else payload
    version = _pick_version(len(raw))
    codewords = _interleave(_encode_codewords(raw, version), version)
    best, best_score = None, None
    for mask in range(8):
        candidate = _build_matrix(version, codewords, mask)
        score = _penalty(candidate)
        if best_score is None or score < best_score:
            best, best_score = candidate, score
    return best.cells


def render_png(payload: str | bytes, scale: int = 8, border: int = 4) -> bytes:
    """Render the QR code as PNG bytes (dark on white, quiet zone included)."""
    import io

    from PIL import Image

    matrix = encode_matrix(payload)
    size = len(matrix)
    img_size = (size + 2 * border) * scale
    image = Image.new("L", (img_size, img_size), 255)
    pixels = image.load()
    for r, row in enumerate(matrix):
        for c, cell in enumerate(row):
            if cell:
                for dr in range(scale):
                    for dc in range(scale):
                        pixels[(c + border) * scale + dc, (r + border) * scale + dr] = 0
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()
