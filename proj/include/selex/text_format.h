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

// Line-oriented text serialization helpers. Reals are written as C99
// hexadecimal floating literals so that a write/read cycle is bit-exact.

#ifndef SELEX_TEXT_FORMAT_H_
#define SELEX_TEXT_FORMAT_H_

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace selex {

// Accepts decimal and hexadecimal literals. Returns false on trailing junk.
bool parse_real(std::string_view text, double* value);

// Shortest decimal that round-trips.
std::string format_real_decimal(double value);

// Hexadecimal float literal ("%a").
std::string format_real_exact(double value);

// Whitespace token reader that tracks the current line for diagnostics.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string source);

  // Reads the next line and splits it into tokens; fails at end of input.
  std::vector<std::string> line();
  // Reads a line and checks that it starts with `keyword`. Returns the
  // remaining tokens.
  std::vector<std::string> expect(std::string_view keyword);
  bool at_end();

  double real(const std::string& token) const;
  long long integer(const std::string& token) const;
  Eigen::VectorXd reals(const std::vector<std::string>& tokens,
                        size_t first) const;

  [[noreturn]] void fail(const std::string& message) const;

 private:
  std::istream& in_;
  std::string source_;
  int line_number_ = 0;
};

void write_reals(std::ostream& out, const Eigen::Ref<const Eigen::VectorXd>& v);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);
std::string sha256_bytes(std::string_view bytes);

}  // namespace selex

#endif  // SELEX_TEXT_FORMAT_H_
