"""The classifier interface shared by all three method families.

Every method separates a training-mode objective (``set_forward_loss``)
from an evaluation-mode predictor (``set_forward``). Evaluation never
writes to the method's parameters.
"""

from __future__ import annotations

import numpy as np

from ..autograd import Tensor
from ..backbones import EmbeddingModel
from ..errors import StateError


def predict_labels(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(scores, axis=1)


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict_labels(scores) == labels))


class FewShotMethod:
    family: str = ""
    name: str = ""

    def __init__(self, model: EmbeddingModel):
        self.model = model
        self.head_params: dict = {}

    def parameters(self) -> dict:
        return {**self.model.params, **self.head_params}

    def trainable(self) -> list:
        return list(self.parameters().values())

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state(self, state: dict, strict: bool = True) -> list:
        """Copy values from ``state`` into matching parameters.

        Returns the names that were loaded. With ``strict`` every parameter
        must be present.
        """
        loaded = []
        for name, p in self.parameters().items():
            if name not in state:
                if strict:
                    raise StateError(f"checkpoint lacks parameter {name}")
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise StateError(f"{name}: checkpoint shape {value.shape} != {p.shape}")
            p.data = value.copy()
            loaded.append(name)
        return loaded

    def embed(self, x, params=None) -> Tensor:
        return self.model.forward(x, params)

    def set_forward_loss(self, episode):
        """Training-mode objective on one episode: (loss Tensor, query scores)."""
        raise NotImplementedError

    def set_forward(self, episode) -> np.ndarray:
        """Evaluation-mode query scores, shape (way * query, way)."""
        raise NotImplementedError
