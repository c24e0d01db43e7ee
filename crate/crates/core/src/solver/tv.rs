//! Total variation and its proximal operator.

use crate::scalar::Real;

/// `sum_i |a[i+1] - a[i]|`; the last index has no forward neighbour.
pub fn total_variation<T: Real>(a: &[T]) -> T {
    a.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Exact 1D TV denoising, `argmin_x 0.5 |x - input|^2 + lambda TV(x)`.
///
/// Direct taut-string style algorithm running in linear time on typical
/// inputs (Condat's method).
pub fn prox_tv<T: Real>(input: &[T], lambda: T, output: &mut [T]) {
    let width = input.len();
    debug_assert_eq!(output.len(), width);
    if width == 0 {
        return;
    }
    if !(lambda > T::zero()) {
        output.copy_from_slice(input);
        return;
    }
    let mut k = 0usize;
    let mut k0 = 0usize;
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let mut kplus = 0usize;
    let mut kminus = 0usize;
    let twolambda = lambda + lambda;
    let minlambda = -lambda;
    loop {
        while k == width - 1 {
            if umin < T::zero() {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > T::zero() {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / T::from_usize_lossy(k - k0 + 1);
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / T::from_usize_lossy(kminus - k0 + 1);
            umin = lambda;
        }
        if umax <= minlambda {
            kplus = k;
            vmax += (umax + lambda) / T::from_usize_lossy(kplus - k0 + 1);
            umax = minlambda;
        }
    }
}

/// Proximal map of `lambda TV + indicator(x >= 0)`.
///
/// For 1D TV, clipping the TV prox at zero gives the prox of the sum.
pub fn prox_tv_nonneg<T: Real>(input: &[T], lambda: T, output: &mut [T]) {
    prox_tv(input, lambda, output);
    for o in output.iter_mut() {
        if *o < T::zero() {
            *o = T::zero();
        }
    }
}
