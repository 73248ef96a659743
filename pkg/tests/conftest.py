"""Shared test helpers: finite-difference gradient checking, the golden
SMILES corpus, toy model configs, and synthetic datasets."""

from pathlib import Path

import numpy as np
import pytest

from dtadyn.autodiff import Tape, backward
from dtadyn.data import AffinityRecord
from dtadyn.model import ModelConfig
from dtadyn.protein import DynamicDescriptor

DATA_DIR = Path(__file__).parent / "data"

# small ligands drawn from the golden corpus
SMALL_SMILES = [
    "CCO", "C=C", "CC(=O)O", "CC(=O)C", "CC(C)C", "NC(=O)N",
    "CCBr", "C1CC1", "c1ccccc1", "c1ccncc1",
]

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"


def load_golden_corpus():
    """(smiles, atom_count, bond_count) rows from the frozen golden file."""
    rows = []
    for line in (DATA_DIR / "smiles_golden.tsv").read_text().splitlines():
        smiles, atoms, bonds = line.split("\t")
        rows.append((smiles, int(atoms), int(bonds)))
    return rows


def central_difference(f, arr, index, h=1e-5):
    """Two-sided difference of scalar f() wrt arr.flat[index], in place."""
    flat = arr.ravel()
    old = flat[index]
    flat[index] = old + h
    f_plus = f()
    flat[index] = old - h
    f_minus = f()
    flat[index] = old
    return (f_plus - f_minus) / (2.0 * h)


def grad_matches(ad_grad, fd_grad, tol):
    """Relative agreement with an absolute escape hatch of tol for
    near-zero gradients (where FD noise dominates any relative measure)."""
    return abs(ad_grad - fd_grad) <= max(tol * max(abs(ad_grad), abs(fd_grad)), tol)


def check_gradients(build, tensors, tol, h=1e-5, sample=None, rng=None):
    """Compare tape gradients of build() (a scalar-producing closure over
    `tensors`) against central finite differences.

    With sample=N, only N random coordinates per tensor are probed (for
    large parameter tensors); otherwise every coordinate is checked.
    """
    for t in tensors:
        t.grad = None
    with Tape():
        loss = build()
        backward(loss)
    ad_grads = []
    for t in tensors:
        assert t.grad is not None, "tensor missing gradient after backward"
        ad_grads.append(t.grad.copy())

    def value():
        return build().item()  # no active tape: pure forward

    worst = 0.0
    for t, ad in zip(tensors, ad_grads):
        size = t.array.size
        if sample is not None and size > sample:
            assert rng is not None
            indices = rng.choice(size, size=sample, replace=False)
        else:
            indices = range(size)
        for i in indices:
            fd = central_difference(value, t.array, i, h)
            ad_i = ad.ravel()[i]
            assert grad_matches(ad_i, fd, tol), (
                f"gradient mismatch at flat index {i} of shape {t.array.shape}: "
                f"tape {ad_i!r} vs finite difference {fd!r}"
            )
            denom = max(abs(ad_i), abs(fd), 1.0)
            worst = max(worst, abs(ad_i - fd) / denom)
    return worst


def nudge_biases_off_kinks(params, rng):
    """Move zero-initialized biases to generic values so finite differences
    never straddle an exact relu kink (zero biases put relu-dead padded
    conv regions exactly at pre-activation 0)."""
    for name, tensor in params.items():
        if name.endswith("bias"):
            offset = rng.uniform(0.05, 0.15, size=tensor.shape)
            sign = np.where(rng.random(tensor.shape) < 0.5, -1.0, 1.0)
            tensor.array += offset * sign


def toy_model_config(**overrides) -> ModelConfig:
    base = dict(
        embed_dim=8,
        gcn_layers=2,
        attention_heads=2,
        dropout_p=0.2,
        dilation_rate=2,
        conv_kernels=(3, 3),
        conv_channels=(4, 8),
        max_seq_len=32,
        mlp_hidden=(8,),
        head_hidden=(16, 8),
        fusion_dim=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


def synthetic_records(n=32, seed=0, seq_len=50) -> list[AffinityRecord]:
    """Seeded synthetic dataset: small corpus SMILES, random sequences,
    random descriptors, targets in [0, 12]."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        affinity = float(rng.uniform(0.0, 12.0))
        records.append(
            AffinityRecord(
                smiles=SMALL_SMILES[int(rng.integers(len(SMALL_SMILES)))],
                protein_sequence="".join(
                    rng.choice(list(RESIDUES), size=seq_len)
                ),
                pdb_id=f"TS{i:02d}",
                measure="Kd",
                raw_value=10.0 ** (9.0 - affinity),
                affinity=affinity,
                descriptors=DynamicDescriptor(
                    avg_rmsf=float(rng.uniform(0.5, 3.0)),
                    avg_gyr=float(rng.uniform(10.0, 30.0)),
                    div_se=float(rng.uniform(0.0, 1.0)),
                    div_mm=float(rng.uniform(0.0, 1.0)),
                ),
            )
        )
    return records


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
