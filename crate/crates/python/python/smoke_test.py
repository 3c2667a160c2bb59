"""Quick end-to-end check of the Python bindings."""

import random
import tempfile

import secvault


def main():
    f = secvault.Field(8)
    assert f.mul(2, 3) == 6
    assert f.mul(f.inv(7), 7) == 1

    code = secvault.Code(6, 3)
    x1 = [[1, 2], [3, 4], [5, 6]]
    x2 = [[1, 2], [9, 4], [5, 6]]
    shares = code.encode(x1)
    assert len(shares) == 6
    assert code.decode_full([(i, shares[i]) for i in (1, 3, 5)]) == x1

    archive = secvault.Archive(code, [x1, x2])
    assert archive.storage_pattern() == ["x1", "z2"]
    assert archive.delta_gammas() == [None, 1]
    obj, reads = archive.retrieve(2)
    assert obj == x2 and reads == 5
    obj, reads = archive.retrieve(2, failed=[0, 1, 2])
    assert obj == x2
    try:
        archive.retrieve(1, failed=[0, 1, 2, 3])
    except secvault.UnrecoverableError:
        pass
    else:
        raise AssertionError("expected an unrecoverable error")

    assert secvault.census(6, 3, 1) == (63, 41, 15, 56)
    assert secvault.census(6, 3, 1, systematic=True) == (63, 41, 3, 44)
    p = 0.1
    q = 1 - p
    closed = p**6 + 6 * p**5 * q + 12 * p**4 * q**2
    assert abs(secvault.loss_prob_delta(6, 3, 1, p, systematic=True) - closed) < 1e-12

    basic, optimized, baseline = secvault.scenario_l5()
    assert basic == [10, 16, 26, 32, 42]
    assert optimized == [10, 16, 10, 16, 10]
    assert baseline[-1] == 50

    mu, err, _ = secvault.monte_carlo_mu(6, 3, 1, 0.05, trials=20000, seed=7, systematic=True)
    assert abs(mu - secvault.exact_mu(6, 3, 1, 0.05, systematic=True)) < 4 * err + 1e-9

    rng = random.Random(3)
    v1 = bytes(rng.randrange(256) for _ in range(50))
    v2 = bytearray(v1)
    v2[7] ^= 0xFF
    with tempfile.TemporaryDirectory() as root:
        stored = secvault.StoredArchive.create(root, "demo", [v1], code, mode="reversed")
        stored.append(bytes(v2))
        again = secvault.StoredArchive.open(root, "demo")
        assert len(again) == 2
        assert again.retrieve(1, failed=[2, 4])[0] == v1
        assert again.retrieve(2)[0] == bytes(v2)
        assert "mode = \"reversed\"" in again.manifest()

    print("python smoke test passed")


if __name__ == "__main__":
    main()
