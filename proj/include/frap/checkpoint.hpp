#pragma once

#include <string>

#include <json.hpp>

#include "frap/tensor.hpp"

namespace frap {

/// Flat little-endian float64 container plus a JSON manifest.
///
/// `<path>` holds the concatenated arrays; `<path>.json` lists each array's
/// name, shape, dtype and byte offset, and carries a free-form `meta` object
/// that callers use to make the checkpoint self-describing.
struct Checkpoint {
    ParamSet arrays;
    nlohmann::json meta = nlohmann::json::object();
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

std::string manifest_path(const std::string& path);

}  // namespace frap
