#pragma once

#include <string>

#include "gsfda/dataset.hpp"

namespace gsfda {

// CSV format: header row "f0,f1,...,fD[,label]", UTF-8, decimal point, one
// sample per row. Values are written with 17 significant digits so a
// save/load round trip is bit-exact.
Dataset load_csv(const std::string& path, bool has_labels);
void save_csv(const std::string& path, const Dataset& ds);

}  // namespace gsfda
