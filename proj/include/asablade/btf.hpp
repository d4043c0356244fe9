// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

#include "asablade/tensor.hpp"

namespace asablade::btf {

// Layout: "BTF1", u32 rank, rank x u32 extents, then row-major f32 data.
// Everything little-endian.

void write(std::ostream& os, const Tensor& t);
Tensor read(std::istream& is);

void save(const std::string& path, const Tensor& t);
Tensor load(const std::string& path);

}  // namespace asablade::btf
