"""Pure-Python reference for the frozen values in the test suite.

Nothing here imports numpy or lshmem: the seed mixer, coefficient mapping,
polynomial evaluation, minhash folding and rehashing are rewritten with
plain integers. Run it to regenerate the constants pasted into the tests.
"""

M64 = (1 << 64) - 1
P = (1 << 61) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x):
    z = (x + GOLDEN) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def derive(seed, *counters):
    h = mix64(seed)
    for c in counters:
        h = mix64(h ^ mix64((c * GOLDEN) & M64))
    return h


def coeffs(raw):
    return [raw[0] % P] + [1 + u % (P - 1) for u in raw[1:]]


def poly(a, x):
    acc = 0
    for c in reversed(a):
        acc = (acc * x + c) % P
    return acc


def lma_slots(seed, d, n_h, m, items, k_perm=5, k_rehash=2):
    out = []
    for i in range(d):
        mins = []
        for j in range(n_h):
            a = coeffs([derive(seed, 2, i, j, q) for q in range(k_perm)])
            mins.append(min(poly(a, x) for x in items))
        fold = 1 + derive(seed, 4, i) % (P - 1)
        key = mins[0]
        for v in mins[1:]:
            key = (key * fold + v) % P
        r = coeffs([derive(seed, 5, i, q) for q in range(k_rehash)])
        out.append(poly(r, key) % m)
    return out


def pair_slots(seed, m, d, v, k=2):
    a = coeffs([derive(seed, 6, q) for q in range(k)])
    return [poly(a, v * d + i) % m for i in range(d)]


def universal(seed, k):
    return coeffs([derive(seed, 1, q) for q in range(k)])


def rademacher(seed, slot):
    return 1 - 2 * (derive(seed, 8, slot) >> 63)


if __name__ == "__main__":
    print("mix64", [mix64(x) for x in (0, 1, 12345, M64)])
    print("derive", derive(42, 7, 3))
    print("universal(7,2)", universal(7, 2))
    print("universal(8,2)", universal(8, 2))
    print("lma(2024,8,2,1000,{3,17,40,41})", lma_slots(2024, 8, 2, 1000, [3, 17, 40, 41]))
    print("lma(2024,8,2,1000,range(5))", lma_slots(2024, 8, 2, 1000, range(5)))
    print("pair(99,500,4,v=7)", pair_slots(99, 500, 4, 7))
    print("rademacher(5, 0..9)", [rademacher(5, s) for s in range(10)])
