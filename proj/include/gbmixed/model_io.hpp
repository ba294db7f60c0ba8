#pragma once

#include "gbmixed/boosting.hpp"

#include <istream>
#include <ostream>
#include <string>

namespace gbmixed {

inline constexpr int kModelFormatVersion = 1;

/// Line-oriented tagged records. Doubles are written in shortest round-trip form,
/// so a reloaded model predicts bit-identically.
void save_model(const FittedModel& model, std::ostream& out);
void save_model(const FittedModel& model, const std::string& path);
std::string serialize_model(const FittedModel& model);

FittedModel load_model(std::istream& in);
FittedModel load_model(const std::string& path);

/// Percent-encodes whitespace and '%' so names survive whitespace tokenizing.
std::string escape_token(const std::string& s);
std::string unescape_token(const std::string& s);

}  // namespace gbmixed
