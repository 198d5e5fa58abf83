#pragma once

#include <string>

#include "calm/model.h"

namespace calm {

// Versioned JSON container: config plus named row-major tensors. Numbers are
// written with shortest round-trip formatting, so save/load is value-exact and
// identical models serialize to identical bytes.
template <typename T>
void save_checkpoint(ModelParams<T>& model, const std::string& path);

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path);

}  // namespace calm
