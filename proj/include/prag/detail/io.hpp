#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "prag/errors.hpp"

namespace prag::detail {

/// Writes via a temp file in the same directory, then renames into place.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& body);

/// Calls fn(line_number, parsed) per nonempty line; 1-based line numbers.
/// A line that fails to parse raises Error(parse_error_code, "line N: ...").
void for_each_jsonl(const std::filesystem::path& path, ErrorCode parse_error_code,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

std::string read_file(const std::filesystem::path& path);

/// UTC timestamp like "2026-08-16T09:00:00Z".
std::string iso8601_utc_now();

/// "http://host:port/some/path" -> {"http://host:port", "/some/path"}.
struct Endpoint {
  std::string base;
  std::string path;
};

Endpoint split_endpoint(const std::string& url);

// Little-endian binary scalar I/O.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint32_t read_u32(std::istream& in, const std::string& what);
std::uint64_t read_u64(std::istream& in, const std::string& what);

}  // namespace prag::detail
