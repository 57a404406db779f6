#pragma once

#include <string>
#include <vector>

#include "qv/common.hpp"
#include "qv/dataset.hpp"
#include "qv/features.hpp"

namespace qv {

struct FeatureRecord {
  Label label = Label::spoof;
  FeatureImage image;
};

// QVFC feature cache: magic "QVFC", format version u32, record count u64,
// then per record: label u8 (0 spoof, 1 bonafide), height u32, width u32,
// channels u32, and height*width*channels little-endian float32 values in
// row-major (y, x, C) order.
void write_cache(const std::string& path, const std::vector<FeatureRecord>& records);
std::vector<FeatureRecord> read_cache(const std::string& path);

}  // namespace qv
