"""Walk through the deconvolution-to-convolution transformation.

A stride-2 deconvolution zero-upsamples its input before convolving, so
most multiplies hit an inserted zero. Splitting the kernel by index
parity turns the layer into a handful of small dense convolutions over
the original input, and a gather interleaves their outputs.
"""

import numpy as np

from svopt import (
    Tensor,
    deconv_reference,
    decompose_2d,
    redundant_mac_fraction,
    transformed_deconv,
    upsample_zero,
)
from svopt.deconv import transform_multiply_count

rng = np.random.default_rng(0)

kernel = Tensor(np.arange(1, 10, dtype=np.float32).reshape(3, 3))
print("original 3x3 kernel:")
print(kernel.array, end="\n\n")

print("parity slices (phase, offset bits, extents):")
kernel_set = decompose_2d(kernel)
for sub in kernel_set.kernels:
    print(f"  phase {sub.phase_index}  delta={sub.delta}  dims={sub.dims}")
    print(f"{sub.tensor.array}\n" if not sub.is_empty else "  (empty)\n")

ifmap = Tensor(rng.integers(-4, 5, (3, 3)).astype(np.float32))
print("what the naive path convolves (3x3 input zero-upsampled to 7x7):")
print(upsample_zero(ifmap, 2, with_border=True).array, end="\n\n")

reference = deconv_reference(ifmap, kernel, factor=2, with_border=True)
transformed = transformed_deconv(ifmap, kernel, with_border=True)
print("reference ofmap:")
print(reference.array, end="\n\n")
print("transformed ofmap (sub-convolutions + gather):")
print(transformed.array, end="\n\n")
assert np.array_equal(reference.array, transformed.array)

fraction = redundant_mac_fraction((3, 3), (3, 3), factor=2, with_border=True)
total_macs = reference.size * kernel.size
multiplies = transform_multiply_count((3, 3), (3, 3), with_border=True)
print(f"naive MACs:            {total_macs}")
print(f"zero-operand fraction: {fraction:.3f}  ({round(fraction * total_macs)} wasted MACs)")
print(f"transformed multiplies: {multiplies}  (exactly the useful MACs)")
