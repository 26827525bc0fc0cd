"""Quick check of the kinn extension module.

Build it first with `pip install --no-build-isolation ./crates/python`
(or `maturin develop -m crates/python/Cargo.toml`), then run this file.
"""

import json

import kinn


def main():
    ar1 = kinn.simulate_arma([0.8], [], 2000, seed=42)
    pacf = kinn.pacf(ar1, 3)
    assert pacf[0] == 1.0 and abs(pacf[1] - 0.8) < 0.05, pacf

    model = kinn.Sarima.fit(ar1, p=1, d=0, q=0, seasonal_d=0, seasonal_q=0, s=1)
    assert abs(model.ar[0] - 0.8) < 0.05, model
    again = kinn.Sarima.from_json(model.to_json())
    assert again.ar == model.ar

    series = kinn.generate_synthetic(length=1200)
    n = len(series)
    train_end = int(0.7 * n)
    expert = kinn.Sarima.fit(series[:train_end])
    test = (int(0.8 * n), n)
    expert_preds = expert.rolling_forecast(series, *test)

    net = kinn.Kinn.train(series, expert, widths=[8], epochs=3)
    preds = net.predict(series, *test)
    truth = series[test[0]:test[1]]
    print("expert mse", kinn.mse(expert_preds, truth))
    print("kinn mse  ", kinn.mse(preds, truth))
    print("best epoch", net.best_epoch)

    errs = [abs(p - t) for p, t in zip(preds, truth)]
    base = [abs(p - t) for p, t in zip(expert_preds, truth)]
    print("step-wise", kinn.stepwise_analysis(errs, base))

    config = """
[dataset.synthetic]
length = 1200

[network]
widths = [4]
epochs = 2

[experiment]
ids = [5]
"""
    results = json.loads(kinn.run_experiments(config))
    print("experiment rows", [r["label"] for r in results["results"]])
    assert not results["failures"]

    try:
        kinn.pacf([1.0, 1.0, 1.0, 1.0], 1)
    except ValueError as exc:
        print("constant series rejected:", exc)
    else:
        raise AssertionError("expected ValueError")
    print("ok")


if __name__ == "__main__":
    main()
