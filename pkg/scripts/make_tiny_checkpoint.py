"""Regenerate the small sorting checkpoint bundled for ``permoptim selftest``."""

from pathlib import Path

from permoptim.harness.config import TrainConfig
from permoptim.harness.train import save_model, train

OUT = Path(__file__).resolve().parents[1] / "src" / "permoptim" / "data" / "tiny_sort.popt"

if __name__ == "__main__":
    config = TrainConfig(n=5, epochs=2, sets=4096, batch=256, chunk=256, seed=11,
                         checkpoint="tiny_sort.popt", metrics="tiny_sort.csv")
    model, logs = train(config)
    save_model(OUT, model, config)
    print(f"wrote {OUT} (final mse {logs[-1].mse:.3g}, eta {logs[-1].eta:.3f})")
