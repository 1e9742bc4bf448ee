#!/usr/bin/env python3
# Copyright 2026 The asf Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Standalone mel filterbank reference.

Re-derives the band-integrated triangular filterbank from the formulas alone
(no shared code with the C++ implementation):

  * mel scale: mel(f) = 2595 * log10(1 + f / 700)
  * n_mels + 2 edges equally spaced in mel between 0 and sample_rate / 2
  * each triangle is area-normalized (integral over Hz equals 1) and then
    integrated over the frequency band covered by each FFT bin
    [k*df - df/2, k*df + df/2] clipped to [0, nyquist], df = sr / fft_size.

Usage:
  mel_filterbank_oracle.py SAMPLE_RATE FFT_SIZE N_MELS            # text rows
  mel_filterbank_oracle.py SAMPLE_RATE FFT_SIZE N_MELS --out F    # f32 binary
"""

import math
import struct
import sys


def hz_to_mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def seg_integral(a, b, lo, hi, rising):
    """Integral of one unit-triangle edge over [a, b]."""
    x0 = max(a, lo)
    x1 = min(b, hi)
    if x1 <= x0 or hi <= lo:
        return 0.0
    if rising:
        return ((x1 - lo) ** 2 - (x0 - lo) ** 2) / (2.0 * (hi - lo))
    return ((hi - x0) ** 2 - (hi - x1) ** 2) / (2.0 * (hi - lo))


def filterbank(sample_rate, fft_size, n_mels):
    n_bins = fft_size // 2 + 1
    nyquist = sample_rate / 2.0
    mel_max = hz_to_mel(nyquist)
    edges = [mel_to_hz(mel_max * m / (n_mels + 1)) for m in range(n_mels + 2)]
    df = sample_rate / fft_size
    rows = []
    for m in range(n_mels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        norm = 2.0 / (hi - lo)
        row = []
        for k in range(n_bins):
            a = max(0.0, k * df - df / 2.0)
            b = min(nyquist, k * df + df / 2.0)
            w = norm * (seg_integral(a, b, lo, ctr, True) +
                        seg_integral(a, b, ctr, hi, False))
            row.append(w)
        rows.append(row)
    return rows


def main(argv):
    if len(argv) not in (4, 6) or (len(argv) == 6 and argv[4] != "--out"):
        sys.stderr.write(__doc__)
        return 2
    sample_rate, fft_size, n_mels = int(argv[1]), int(argv[2]), int(argv[3])
    rows = filterbank(sample_rate, fft_size, n_mels)
    if len(argv) == 6:
        with open(argv[5], "wb") as f:
            f.write(struct.pack("<II", n_mels, fft_size // 2 + 1))
            for row in rows:
                f.write(struct.pack("<%df" % len(row), *row))
    else:
        out = sys.stdout
        for row in rows:
            out.write(" ".join("%.17g" % w for w in row))
            out.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
