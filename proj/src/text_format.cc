/*
 * Copyright 2026 The Selex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "selex/text_format.h"

#include <openssl/evp.h>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "selex/core.h"

namespace selex {

bool parse_real(std::string_view text, double* value) {
  if (text.empty()) return false;
  const std::string owned(text);
  char* end = nullptr;
  errno = 0;
  const double parsed = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size() || errno == ERANGE) return false;
  *value = parsed;
  return true;
}

std::string format_real_decimal(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::string format_real_exact(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%a", value);
  return buffer;
}

TokenReader::TokenReader(std::istream& in, std::string source)
    : in_(in), source_(std::move(source)) {}

std::vector<std::string> TokenReader::line() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_number_;
    std::istringstream tokens(text);
    std::vector<std::string> out{std::istream_iterator<std::string>(tokens),
                                 std::istream_iterator<std::string>()};
    if (!out.empty()) return out;
  }
  fail("unexpected end of file");
}

std::vector<std::string> TokenReader::expect(std::string_view keyword) {
  std::vector<std::string> tokens = line();
  if (tokens.front() != keyword) {
    fail("expected '" + std::string(keyword) + "', found '" + tokens.front() +
         "'");
  }
  tokens.erase(tokens.begin());
  return tokens;
}

bool TokenReader::at_end() {
  in_ >> std::ws;
  return in_.peek() == std::char_traits<char>::eof();
}

double TokenReader::real(const std::string& token) const {
  double value = 0.0;
  if (!parse_real(token, &value)) fail("invalid real '" + token + "'");
  return value;
}

long long TokenReader::integer(const std::string& token) const {
  char* end = nullptr;
  const long long value = std::strtoll(token.c_str(), &end, 10);
  if (token.empty() || end != token.c_str() + token.size()) {
    fail("invalid integer '" + token + "'");
  }
  return value;
}

Eigen::VectorXd TokenReader::reals(const std::vector<std::string>& tokens,
                                   size_t first) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(tokens.size() - first));
  for (size_t i = first; i < tokens.size(); ++i) {
    v(static_cast<Eigen::Index>(i - first)) = real(tokens[i]);
  }
  return v;
}

void TokenReader::fail(const std::string& message) const {
  throw InvalidArgumentError(source_ + ":" + std::to_string(line_number_) +
                             ": " + message);
}

void write_reals(std::ostream& out,
                 const Eigen::Ref<const Eigen::VectorXd>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out << ' ';
    out << format_real_exact(v(i));
  }
}

std::string sha256_bytes(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path);
  const std::string bytes{std::istreambuf_iterator<char>(in),
                          std::istreambuf_iterator<char>()};
  return sha256_bytes(bytes);
}

}  // namespace selex
