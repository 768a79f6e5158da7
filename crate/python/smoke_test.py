"""Smoke test for the nlunmix extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import nlunmix


def rows_sum_to_one(a, tol=1e-9):
    return all(abs(sum(r) - 1.0) <= tol and min(r) >= 0.0 for r in a)


def main():
    scene = nlunmix.generate(preset="dc1-small", model="blmm", snr=20.0, seed=3, bands=20, pixels=400)
    y, truth, m_true = scene["cube"], scene["abundances"], scene["endmembers"]
    assert len(y) == 400 and len(y[0]) == 20
    assert len(m_true) == 20 and len(m_true[0]) == 3
    assert scene["grid"] is None

    m0, idx = nlunmix.vca(y, 3, seed=0)
    assert len(idx) == 3 and len(m0) == 20
    for k, n in enumerate(idx):
        assert all(m0[b][k] == y[n][b] for b in range(20))

    a_fcls = nlunmix.fcls(y, m0)
    assert rows_sum_to_one(a_fcls)
    fcls_score = nlunmix.evaluate(a_fcls, truth)
    assert 0.0 <= fcls_score["rmse_a"] < 1.0

    same = nlunmix.evaluate(truth, truth, est_m=m_true, true_m=m_true)
    assert same["rmse_a"] == 0.0 and same["angles"] == [0.0, 0.0, 0.0]

    model, history = nlunmix.Autoencoder.fit(y, m0, "macu", max_epochs=3, seed=1)
    assert 2 <= len(history) <= 3
    assert all(math.isfinite(h[1]) for h in history)
    a = model.encode(y)
    assert rows_sum_to_one(a)
    assert len(model.alpha) == 3
    assert model.pinv_residual() is not None
    y_hat = model.decode(a)
    assert min(min(r) for r in y_hat) >= 0.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.bin")
        model.save(path)
        again = nlunmix.Autoencoder.load(path)
        assert again.encode(y[:5]) == model.encode(y[:5])

    mf = nlunmix.Autoencoder(m0, "mfaec", seed=2)
    assert mf.alpha is None and mf.pinv_residual() is None
    assert rows_sum_to_one(mf.encode(y[:10]))

    try:
        nlunmix.Autoencoder(m0, "nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown variant accepted")

    print(f"nlunmix {nlunmix.__version__}: FCLS RMSE_A {fcls_score['rmse_a']:.4f}, "
          f"MAC-U alpha {[round(v, 4) for v in model.alpha]}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
