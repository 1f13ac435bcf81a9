"""Quantum Fourier model toolkit.

Exact frequency spectra and redundancies for Hamiltonian-encoded circuits,
a batched statevector simulator, Monte-Carlo Fourier-coefficient statistics,
closed-form 2-design variances and bounds, and Haar-moment distances.
"""

from qfm.spectrum import (
    EncodingBlock,
    EncodingLayer,
    EncodingSpec,
    RedundancyTable,
    build_encoding,
    compose,
    full_redundancy,
    layer_spectrum,
    partial_redundancy,
    sequential_parallel_check,
)
from qfm.circuit import (
    BrickwiseLayout,
    Circuit,
    Gate,
    LightCone,
    TrainableBlock,
    build_brickwise,
    build_model_circuit,
    extract_lightcone,
    haar_block,
    simplified_two_design,
    strongly_entangling,
)
from qfm.simulator import Observable, evaluate, gradient

__all__ = [
    "BrickwiseLayout",
    "Circuit",
    "EncodingBlock",
    "EncodingLayer",
    "EncodingSpec",
    "Gate",
    "LightCone",
    "Observable",
    "RedundancyTable",
    "TrainableBlock",
    "build_brickwise",
    "build_encoding",
    "build_model_circuit",
    "compose",
    "evaluate",
    "extract_lightcone",
    "full_redundancy",
    "gradient",
    "haar_block",
    "layer_spectrum",
    "partial_redundancy",
    "sequential_parallel_check",
    "simplified_two_design",
    "strongly_entangling",
]

__version__ = "0.1.0"
