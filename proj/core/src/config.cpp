#include "encattack/config.hpp"

#include "schema.hpp"

namespace encattack {
namespace {

detail::json parse(const std::string& text, const std::string& where) {
  try {
    return detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw Error(ErrorKind::schema, where + ": invalid JSON: " + e.what());
  }
}

}  // namespace

ImageSpec image_spec_from_json_text(const std::string& text, const std::string& where, const ImageSpec& base) {
  return detail::spec_overlay(parse(text, where), base, where);
}

std::string to_json_text(const ImageSpec& spec) { return detail::to_json(spec).dump(); }

KeyDistribution key_distribution_from_json_text(const std::string& text, const std::string& where,
                                                const KeyDistribution& base) {
  return detail::key_distribution_overlay(parse(text, where), base, where);
}

std::string to_json_text(const KeyDistribution& dist) { return detail::to_json(dist).dump(); }

}  // namespace encattack
