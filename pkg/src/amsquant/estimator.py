"""scikit-learn style front end for the quantizer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_weights
from .kernels import dequantize, gemv
from .quantizer import quantize_tensor
from .schemes import get_scheme


class AMSQuantizer(TransformerMixin, BaseEstimator):
    """Weight-only minifloat quantizer with adaptive mantissa sharing.

    ``fit`` quantizes a ``(out_features, in_features)`` weight matrix and keeps
    the packed result. ``transform`` returns the restored (fake-quantized)
    version of a weight matrix, and ``predict`` runs the fused dequantize-GEMV
    of the fitted weights against ``(batch, in_features)`` activations.

    Parameters
    ----------
    scheme : str, default="fp5.33-e2m3"
        Scheme id, e.g. ``"fp4.25-e2m2"`` or ``"fp6-e2m3"``.
    n_jobs : int, default=None
        Worker threads across output rows. ``None`` means 1, ``0`` or ``-1``
        means all CPUs. Results do not depend on it.

    Attributes
    ----------
    quantized_ : QuantizedTensor
    scales_ : ndarray of shape (out_features,), float16
    n_features_in_ : int
    """

    def __init__(self, scheme="fp5.33-e2m3", n_jobs=None):
        self.scheme = scheme
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        weights = check_weights(X)
        self.scheme_ = get_scheme(self.scheme)
        self.quantized_ = quantize_tensor(weights, self.scheme_, n_jobs=self.n_jobs)
        self.scales_ = self.quantized_.scales
        self.n_features_in_ = weights.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "quantized_")
        weights = check_weights(X)
        if weights.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {weights.shape[1]} features, but AMSQuantizer is expecting {self.n_features_in_}"
            )
        return dequantize(quantize_tensor(weights, self.scheme_, n_jobs=self.n_jobs))

    def predict(self, X):
        check_is_fitted(self, "quantized_")
        return gemv(self.quantized_, X, n_jobs=self.n_jobs)

    def restore(self) -> np.ndarray:
        """Dense float32 restoration of the fitted weights."""
        check_is_fitted(self, "quantized_")
        return dequantize(self.quantized_)
