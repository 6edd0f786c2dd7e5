# SPDX-License-Identifier: Apache-2.0
"""Independent reference computations for the frozen test fixtures.

Everything here is written from the documented definitions with plain
loops and numpy; nothing is shared with the C++ implementation. Run it to
regenerate the numbers pasted into tests/unit and tests/acceptance.
"""
import itertools
import math

import numpy as np

MASK64 = (1 << 64) - 1


def fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for b in s.encode():
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def splitmix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def token_vector(tok: str) -> np.ndarray:
    h = fnv1a64(tok)
    out = []
    for k in range(8):
        z = splitmix64((h + (k + 1) * 0x9E3779B97F4A7C15) & MASK64)
        u = (z >> 11) * 2.0**-53
        out.append(np.float32(2.0 * u - 1.0))
    return np.array(out, dtype=np.float32)


A = np.array(
    [
        [1.0, 0.0, 0.0, 0.2],
        [0.0, 1.0, 0.0, 0.2],
        [0.0, 0.0, 1.0, 0.2],
        [0.5, -0.5, 0.0, 0.0],
        [0.0, 0.5, -0.5, 0.0],
        [-0.5, 0.0, 0.5, 0.0],
        [0.3, 0.3, 0.3, -0.1],
        [0.0, 0.0, 0.0, 0.3],
    ]
)


def jsd(p, q, floor=1e-8):
    p = np.asarray(p, float) + floor
    q = np.asarray(q, float) + floor
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)
    kl = lambda a, b: sum(ai * math.log(ai / bi) for ai, bi in zip(a, b))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def gauss(win, sigma):
    c = win // 2
    g = [math.exp(-((i - c) ** 2) / (2 * sigma * sigma)) for i in range(win)]
    s = sum(g)
    return [v / s for v in g]


def ssim_level(x, y, win, sigma=1.5, k1=0.01, k2=0.03):
    """Per-channel mean SSIM and CS with a valid-mode Gaussian window, by loops."""
    g = gauss(win, sigma)
    C, H, W = x.shape
    c1, c2 = k1 * k1, k2 * k2
    ss, cs = [], []
    for c in range(C):
        sv, cv = [], []
        for i in range(H - win + 1):
            for j in range(W - win + 1):
                mx = my = sxx = syy = sxy = 0.0
                for a in range(win):
                    for b in range(win):
                        w = g[a] * g[b]
                        xv, yv = x[c, i + a, j + b], y[c, i + a, j + b]
                        mx += w * xv
                        my += w * yv
                        sxx += w * xv * xv
                        syy += w * yv * yv
                        sxy += w * xv * yv
                vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
                csv = (2 * cxy + c2) / (vx + vy + c2)
                cv.append(csv)
                sv.append((2 * mx * my + c1) / (mx * mx + my * my + c1) * csv)
        ss.append(np.mean(sv))
        cs.append(np.mean(cv))
    return np.array(ss), np.array(cs)


def pool2(x):
    C, H, W = x.shape
    return x.reshape(C, H // 2, 2, W // 2, 2).mean(axis=(2, 4))


def ms_ssim(x, y, levels, weights, win=11):
    w = np.array(weights[:levels]) / sum(weights[:levels])
    prod = np.ones(x.shape[0])
    for lvl in range(levels):
        s, c = ssim_level(x, y, win)
        last = lvl == levels - 1
        prod *= np.maximum(s if last else c, 0) ** w[lvl]
        if not last:
            x, y = pool2(x), pool2(y)
    return prod.mean()


def tv(img):
    dh = [(img[c][i][j + 1] - img[c][i][j]) ** 2 for c in range(len(img)) for i in range(len(img[0])) for j in range(len(img[0][0]) - 1)]
    dv = [(img[c][i + 1][j] - img[c][i][j]) ** 2 for c in range(len(img)) for i in range(len(img[0]) - 1) for j in range(len(img[0][0]))]
    return sum(dh) / len(dh) + sum(dv) / len(dv)


def stylenet_params(down=(16, 32, 64), up=(64, 32, 16)):
    block = lambda i, o: i * o * 9 + o + 2 * o  # conv + bias + affine norm
    n, ch = 0, 3
    for d in down:
        n += block(ch, d)
        ch = d
    for u, skip in zip(up, (down[1], down[0], 3)):
        n += block(ch + skip, u)
        ch = u
    return n + ch * 3 * 9 + 3


def tmps_oracle(feats, text, M, floor=0.8):
    """Two-stage selection step by step: rank by text cosine, average the top M, re-rank."""
    cos = lambda a, b: float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    K = len(feats)
    s = [cos(f, text) for f in feats]
    seed = [i for i in range(K) if sum(1 for v in s if v > s[i]) < M]
    avg = np.mean([feats[i] for i in seed], axis=0)
    sh = [cos(f, avg) for f in feats]
    half = (K + 1) // 2
    keep = [j for j in range(K) if sum(1 for v in sh if v > sh[j]) < half and sh[j] > floor]
    return s, seed, sh, keep


def color_embedding(r, g, b):
    return (A.astype(np.float32) @ np.array([r, g, b, 1.0], dtype=np.float32)).astype(np.float64)


TMPS_COLORS = [(0.9, 0.1, 0.1), (0.7, 0.1, 0.15), (0.1, 0.6, 0.2), (0.1, 0.1, 0.9)]


WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]


def main():
    print("gray embedding", (A @ np.array([0.5, 0.5, 0.5, 1.0])).round(6).tolist())
    ra = token_vector("red") + token_vector("apple")
    print("'red apple' vector", [float(v) for v in ra.astype(np.float32)])
    print("token 'apple'", [float(v) for v in token_vector("apple")])
    print("cos((1,1),(1,0))", 1 / math.sqrt(2))
    print("jsd((1,0),(.5,.5))", repr(jsd([1, 0], [0.5, 0.5])))
    print("jsd((.75,.25),(.25,.75))", repr(jsd([0.75, 0.25], [0.25, 0.75])))
    print("ln 2", repr(math.log(2)))

    # Constant 0.2 vs 0.8 on 64x64: 3 levels of an 11-tap window.
    x = np.full((3, 64, 64), 0.2)
    y = np.full((3, 64, 64), 0.8)
    msc = ms_ssim(x, y, 3, WEIGHTS)
    print("ms_ssim const 0.2/0.8 64x64", repr(msc), "abp", repr(1 - msc + 0.6))

    # Closed-form 32x32 pair so the C++ side can rebuild it exactly.
    ii, jj = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    xr = np.stack([0.5 + 0.4 * np.sin(0.7 * ii + 1.3 * jj + 2.1 * c) for c in range(3)])
    yr = np.clip(xr + np.stack([0.15 * np.cos(1.1 * ii - 0.9 * jj + c) for c in range(3)]), 0, 1)
    # 32 -> 16 both hold an 11-tap window, 8 does not: 2 levels.
    print("ms_ssim closed-form 32x32 (2 levels)", repr(ms_ssim(xr, yr, 2, WEIGHTS)))

    stripes = [[[float(j % 2) for j in range(4)] for _ in range(4)] for _ in range(3)]
    print("tv vertical stripes 4x4", tv(stripes))
    best, argmax = -1.0, []
    for bits in itertools.product([0.0, 1.0], repeat=16):
        img = [[list(bits[r * 4:(r + 1) * 4]) for r in range(4)]]
        v = tv(img)
        if v > best + 1e-12:
            best, argmax = v, [bits]
        elif abs(v - best) <= 1e-12:
            argmax.append(bits)
    print("tv max over 4x4 binary", best, "argmax count", len(argmax))

    # l1_b / psnr_b hand fixture: 4x4, left half background.
    src = np.zeros((3, 4, 4))
    out = np.zeros((3, 4, 4))
    for c in range(3):
        for i in range(4):
            for j in range(4):
                src[c, i, j] = (c * 16 + i * 4 + j) / 64.0
                out[c, i, j] = src[c, i, j] + (0.01 * (i + 1) * (c + 1) if j < 2 else 0.5)
    bg = [(i, j) for i in range(4) for j in range(2)]
    s = 0.0
    sq = 0.0
    for c in range(3):
        for i, j in bg:
            s += abs(out[c, i, j] - src[c, i, j])
            sq += (out[c, i, j] - src[c, i, j]) ** 2
    print("l1_b 4x4 fixture", repr(s / (3 * len(bg))), "psnr_b", repr(10 * math.log10(3 * len(bg) / sq)))
    print("psnr 16/255", repr(20 * math.log10(255 / 16)))

    # sty_b with identity features: per-channel masked mean/std (pop var + 1e-5).
    def stats(img):
        mu = img.reshape(3, -1).mean(1)
        sd = np.sqrt(img.reshape(3, -1).var(1) + 1e-5)
        return mu, sd

    src_m = src.copy()
    out_m = out.copy()
    for c in range(3):
        for i in range(4):
            for j in range(2, 4):
                src_m[c, i, j] = 0.0
                out_m[c, i, j] = 0.0
    (m1, s1), (m2, s2) = stats(src_m), stats(out_m)
    print("sty_b 4x4 fixture", repr(float(np.mean((m1 - m2) ** 2) + np.mean((s1 - s2) ** 2))))
    print("stylenet params", stylenet_params())
    feats = [color_embedding(*c) for c in TMPS_COLORS]
    text = color_embedding(0.8, 0.2, 0.1)
    s, seed, sh, keep = tmps_oracle(feats, text, M=2)
    print("tmps 4-patch: text cos", [round(v, 6) for v in s], "seed", seed, "seed cos", [round(v, 6) for v in sh], "keep", keep)


if __name__ == "__main__":
    main()
