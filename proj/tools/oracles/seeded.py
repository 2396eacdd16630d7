"""Independent re-implementation of the engine's hashing and seeding, used to
freeze golden values for the test suite."""

M = 2**64


def fnv1a64(data: bytes, h: int = 0xCBF29CE484222325) -> int:
    for c in data:
        h = ((h ^ c) * 0x100000001B3) % M
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) % M
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) % M
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) % M
    return x ^ (x >> 31)


def derive_seed(seed: int, keys) -> int:
    h = 0xCBF29CE484222325 ^ splitmix64(seed)
    for k in keys:
        h = fnv1a64(k.encode(), h)
        h = fnv1a64(b"\x1f", h)
    return splitmix64(h)


def unit_interval(h: int) -> float:
    return (h >> 11) / 9007199254740992.0


def rebalance_kept(n: int, keep_rate: float, seed: int, source: str, image_id: str) -> int:
    return sum(
        unit_interval(derive_seed(seed, ["rebalance", source, image_id, str(i)])) < keep_rate
        for i in range(1, n + 1))


def shard_of(source: str, image_id: str, shards: int) -> int:
    return fnv1a64((source + "\x1f" + image_id).encode()) % shards


if __name__ == "__main__":
    print("rebalance sky x1000 seed 42:", rebalance_kept(1000, 0.10, 42, "coco", "img-0"))
    ids = ["%012d" % i for i in (139, 285, 632, 724, 776, 785, 802, 872, 885, 1000)]
    print("shards:", [shard_of("coco", i, 4) for i in ids])


class MT19937_64:
    def __init__(self, seed: int):
        self.mt = [0] * 312
        self.mt[0] = seed % M
        for i in range(1, 312):
            self.mt[i] = (6364136223846793005 * (self.mt[i - 1] ^ (self.mt[i - 1] >> 62)) + i) % M
        self.idx = 312

    def next(self) -> int:
        if self.idx >= 312:
            upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
            for i in range(312):
                x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
                xa = x >> 1
                if x & 1:
                    xa ^= 0xB5026F5AA96619E9
                self.mt[i] = self.mt[(i + 156) % 312] ^ xa
            self.idx = 0
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y % M

    def below(self, n: int) -> int:
        threshold = (M - n) % n
        while True:
            r = self.next()
            if r >= threshold:
                return r % n


def sample_indices(n: int, cap: int, rng: MT19937_64):
    k = min(n, max(0, cap))
    idx = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:k])


if __name__ == "__main__":
    g = MT19937_64(5489)
    for _ in range(9999):
        g.next()
    print("mt19937_64 10000th:", g.next())
    print("sample_indices(100, 5, seed 123):", sample_indices(100, 5, MT19937_64(123)))
