#pragma once

#include <string>

#include "dst2r/tensor.hpp"

namespace dst2r {

// Binary tensor file: magic "DTEN1", order as u32 LE, extents as u32 LE,
// then the elements as f64 LE in canonical order.
void write_dten(const std::string& path, const DenseTensor& t);

// Throws io_error on missing file, wrong magic, or truncation.
DenseTensor read_dten(const std::string& path);

}  // namespace dst2r
