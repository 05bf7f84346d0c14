#pragma once

#include <string>

#include "graphrefine/gnn.hpp"
#include "graphrefine/mfn.hpp"
#include "graphrefine/training.hpp"

namespace graphrefine {

/// Key-value text, one "key value" pair per line:
///   format graphrefine-mfn 1
///   F 14
///   lambda ..., beta0 ... beta2, a0 ..., eta0 ..., nu0 ...
/// Values are written with 17 significant digits and read back exactly.
std::string mfn_params_to_text(const MfnParams& params);
/// Throws InputError on unknown, missing or repeated keys.
MfnParams parse_mfn_params(const std::string& text);

/// Versioned JSON with a shape header per block and flat weight arrays.
std::string gnn_params_to_json(const GnnParams& params);
GnnParams parse_gnn_params(const std::string& text);

/// Which model a checkpoint holds; InputError if it is neither.
ModelKind detect_checkpoint(const std::string& text);

}  // namespace graphrefine
