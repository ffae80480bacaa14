"""Minifloat weight quantization with adaptive mantissa-bit sharing.

Non-integer bit-widths (4.25, 4.33, 4.5, 5.33 bits per weight) come from
letting groups of ``k`` weights share the least significant mantissa bit,
with the shared bit chosen per group to minimise restoration error.
"""

from .estimator import AMSQuantizer
from .fpformat import FORMATS, FloatFormat, decode, enumerate_values, round_to_nearest, to_fp16_bits
from .kernels import dequantize, gemv, gemv_reference
from .packing import layout_of, pack_row, unpack_row
from .quantizer import CodeMatrix, QuantizedTensor, ams_share, channel_scale, quantize_tensor, rtn_quantize
from .schemes import SCHEMES, QuantScheme, get_scheme

__all__ = [
    "AMSQuantizer",
    "CodeMatrix",
    "FORMATS",
    "FloatFormat",
    "QuantScheme",
    "QuantizedTensor",
    "SCHEMES",
    "ams_share",
    "channel_scale",
    "decode",
    "dequantize",
    "enumerate_values",
    "gemv",
    "gemv_reference",
    "get_scheme",
    "layout_of",
    "pack_row",
    "quantize_tensor",
    "round_to_nearest",
    "rtn_quantize",
    "to_fp16_bits",
    "unpack_row",
]

__version__ = "0.1.0"
