#pragma once

#include <string>

#include "encattack/encoder.hpp"

namespace encattack {

// JSON-text forms of the shared configuration objects. Parsers start from
// `base` and overwrite only the fields present; unknown fields are schema
// errors.

ImageSpec image_spec_from_json_text(const std::string& text, const std::string& where, const ImageSpec& base = {});
std::string to_json_text(const ImageSpec& spec);

KeyDistribution key_distribution_from_json_text(const std::string& text, const std::string& where,
                                                const KeyDistribution& base = {});
std::string to_json_text(const KeyDistribution& dist);

}  // namespace encattack
