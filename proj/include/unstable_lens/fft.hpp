#pragma once

#include "unstable_lens/core.hpp"

namespace ulens {

// Unitary 2-D DFT: X[k,l] = N^{-1/2} sum x[r,c] exp(-2 pi i (k r / h + l c / w)).
Image dft2(const Image& x);
// Inverse of dft2; the result carries the image-domain tag.
Image idft2(const Image& k);

// In-place unnormalized 1-D transforms on a complex vector (sign -1 forward).
void fft_inplace(Eigen::VectorXcd& v);
void ifft_inplace(Eigen::VectorXcd& v);  // includes the 1/n factor

}  // namespace ulens
