// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/errors.hpp"
#include "clva/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace clva {

// CLVA-TRACE v1 layout:
//   [0, 8)        ASCII magic "CLVATRC1"
//   [8, 12)       u32 LE metadata length M
//   [12, 12+M)    UTF-8 JSON metadata
//   attention     for l, for h: seq_len x seq_len f32 LE, row-major
//   values        iff has_values, for l, for h: seq_len x head_dim f32 LE
// No padding, no compression.

inline constexpr char kTraceMagic[8] = {'C', 'L', 'V', 'A', 'T', 'R', 'C', '1'};

/// Malformed file contents, as opposed to an invariant violation.
class TraceFormatError : public ValidationError {
public:
    enum class Kind { bad_magic, truncated, size_mismatch, bad_metadata };

    TraceFormatError(Kind kind, const std::string& what)
        : ValidationError(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Serializes a valid trace. Refuses (ValidationError) when the trace fails
/// validate().
std::vector<std::uint8_t> encode_trace(const AttentionTrace& trace);

/// Decodes and validates a trace. Throws TraceFormatError for structural
/// problems and ValidationError listing (layer, head, row) for numeric ones.
AttentionTrace decode_trace(std::span<const std::uint8_t> bytes);

/// Writes encode_trace(trace) to sink; returns the byte count.
std::size_t write_trace(const AttentionTrace& trace, std::ostream& sink);
AttentionTrace read_trace(std::istream& source);

std::size_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path);
AttentionTrace read_trace_file(const std::filesystem::path& path);

/// The metadata JSON document exactly as it is embedded in the file.
std::string encode_trace_metadata(const AttentionTrace& trace);

} // namespace clva
