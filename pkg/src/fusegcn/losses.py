"""The three training objectives and their weighted total.

closeness: squared Frobenius distance between the row-normalized Gram
matrices of the two common-encoder outputs, pulling the shared views
together. disparity: negative mean row-wise cosine between each view
embedding and its common counterpart, pushing them apart. classification:
masked cross-entropy over the training nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class LossWeights:
    classification: float = 1.0
    closeness: float = 5e-4
    disparity: float = 1e-3

    def __post_init__(self):
        if self.classification <= 0:
            raise ValueError("classification weight must be positive")
        if self.closeness < 0 or self.disparity < 0:
            raise ValueError("loss weights must be nonnegative")


def closeness_loss(z_ct, z_cf, normalize: bool = False):
    """||gram(norm(z_ct)) - gram(norm(z_cf))||_F^2.

    `normalize=True` divides by N^2 (the Gram matrices have N^2 entries,
    so the raw value grows quadratically with the node count).
    """
    s_t = ad.row_gram(ad.l2_normalize_rows(z_ct))
    s_f = ad.row_gram(ad.l2_normalize_rows(z_cf))
    out = ad.frobenius_sq_diff(s_t, s_f)
    if normalize:
        n = z_ct.shape[0]
        out = ad.scale(out, 1.0 / (n * n))
    return out


def disparity_loss(z_t, z_ct, z_f, z_cf):
    """-(mean row cosine of the topology pair + mean row cosine of the feature pair)."""
    m_t = ad.mean_row_cosine(z_t, z_ct)
    m_f = ad.mean_row_cosine(z_f, z_cf)
    return ad.add_scaled(m_t, m_f, -1.0, -1.0)


def classification_loss(y_hat, y_onehot: np.ndarray, train_mask: np.ndarray,
                        reduction: str = "sum"):
    return ad.masked_cross_entropy(y_hat, y_onehot, train_mask, reduction)


def total_loss(l_cl, l_c, l_d, weights: LossWeights):
    head = ad.add_scaled(l_cl, l_c, weights.classification, weights.closeness)
    return ad.add_scaled(head, l_d, 1.0, weights.disparity)
