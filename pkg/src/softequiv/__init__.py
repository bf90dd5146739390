"""Group convolutions with continuously adjustable symmetry constraints.

The integral operator h(u) = sum_v k(v^-1 u, v) f(v) generalizes the group
convolution with a kernel that may also depend on the absolute sample
position.  Two frequency vectors control the kernel's spectrum: omega over
the stationary (filter-space) argument and omega_prime over the
non-stationary (domain-space) argument.  Setting omega_prime = 0 recovers a
strictly equivariant convolution, omega = omega_prime = 0 an invariant
pooling, and a sub-pixel support a plain linear product; values in between
relax equivariance continuously.
"""

__version__ = "0.1.0"

from .autodiff import Adam, Tensor, backward, load_checkpoint, save_checkpoint
from .data import (
    LabeledImageSet,
    build_mnist6_180,
    downsample,
    load_idx_pair,
    split_set,
    synth_glyph_set,
)
from .fourier import FrequencySpec, RffBasis, embed, init_basis, rbf_kernel
from .groups import (
    GroupElement,
    GroupKind,
    act_on_point,
    compose,
    exp_map,
    identity,
    inverse,
    log_map,
    phi,
    phi_inverse,
    relative,
    rotation2,
    sample_rotations,
    se2_element,
    translation2,
    wrap_angle,
)
from .kernels import (
    KernelField,
    KernelNet,
    SupportMask,
    eval_kernel,
    hard_disk,
    init_kernel_net,
    make_kernel_field,
    no_mask,
    render_filter_bank,
    soft_gaussian,
)
from .models import (
    TABLE1_ROWS,
    Model,
    ModelSpec,
    build_model,
    evaluate_accuracy,
    load_model_weights,
    save_model,
    train_classifier,
)
from .operator import (
    GroupSignal,
    OperatorConfig,
    SoftConvLayer,
    apply_operator,
    enumerate_offsets,
    image_signal,
    lift_image,
    project_signal,
    rotate_image,
)
from .probes import (
    EquivarianceReport,
    interpolation_curve,
    invariance_error,
    rotate_signal,
    rotation_equivariance_error,
    shift_signal,
    translation_equivariance_error,
)
