#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace scope3 {

/// Canonical ledger-text normalization shared by every classifier family:
/// ASCII lowercase, whitespace collapsed to single spaces, and punctuation
/// stripped from the edges of each token. Inner punctuation and digits are
/// kept ("po#3312", "net-30").
std::string normalize(std::string_view text);

/// Whitespace tokenization. Callers normally pass normalized text.
std::vector<std::string> tokenize(std::string_view text);

/// normalize() followed by tokenize().
std::vector<std::string> normalized_tokens(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split(std::string_view text, char sep);

std::string trim(std::string_view text);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

/// Parses a real number; the whole field must be consumed.
bool parse_double(std::string_view text, double& out);

}  // namespace scope3
