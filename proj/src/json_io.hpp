#pragma once

#include <json.hpp>
#include <string>

#include "block_operator.hpp"
#include "dynamics.hpp"
#include "kam.hpp"
#include "measure.hpp"
#include "regularization.hpp"
#include "symbol.hpp"

namespace relkam {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

json cplx_to_json(cplx z);
cplx cplx_from_json(const json& j);

// {d, L, J, blocks: [{l:[...], i, j, block:[[re,im], ...]}]}, blocks row-major,
// all-zero blocks omitted.
json to_json(const BlockOperator& A);
BlockOperator block_operator_from_json(const json& j);

// {order, d, L, K_x, J, entries: [[[ℓ...], k, j, re, im], ...]}, nonzero entries only.
json to_json(const Symbol& a);
Symbol symbol_from_json(const json& j);

json to_json(const FrequencyPoint& w);
FrequencyPoint frequency_from_json(const json& j);

json to_json(const RegularizationState& s);
RegularizationState regularization_from_json(const json& j);

json to_json(const KamState& s);
KamState kam_state_from_json(const json& j);

json to_json(const ResonanceCertificate& c);
json to_json(const KamReport& r);
json to_json(const ExclusionReport& r);
json to_json(const StepFraction& f);
json to_json(const C2Report& c);
json to_json(const EigenAsymptotics& e, bool with_rows);
json to_json(const TransformBounds& b);

// Finite doubles as numbers; NaN and infinities as null.
json number_or_null(double x);

std::string read_text_file(const std::string& path);
// Writes to path.tmp then renames over path.
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace relkam
