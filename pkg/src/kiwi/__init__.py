"""Word- and sentence-level quality estimation for machine translation.

Programmatic use::

    import kiwi

    run = kiwi.train("config.yml")
    model = kiwi.load_model(run.model_path)
    out = model.predict([{"source": "s1 s2", "target": "t1 t2"}])
"""
from .trainer import RunRecord, load as load_model, predict, train

__version__ = "0.1.0"

__all__ = ["RunRecord", "load_model", "predict", "train", "__version__"]
