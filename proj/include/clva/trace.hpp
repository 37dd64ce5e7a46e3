// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/layout.hpp"
#include "clva/matrix.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace clva {

/// Descriptive metadata carried alongside the tensors of a trace.
struct TraceMeta {
    static constexpr int kSchemaVersion = 1;

    int schema_version = kSchemaVersion;
    std::string model_id;
    std::string notes;
    /// Free-form key/value strings (prompt hash, kv grouping factor, ...).
    std::map<std::string, std::string> extra;

    friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

/// Location of a row whose causally visible attention mass is not 1, or which
/// holds an entry outside [0, 1].
struct RowViolation {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t row = 0;
    double row_sum = 0.0;
    bool out_of_range = false;
};

/// Row-sum tolerance applied when validating traces.
inline constexpr double kRowSumTolerance = 1e-4;

/// Post-softmax attention of one prefill forward pass, L layers by H heads,
/// each a seq_len x seq_len causal matrix. Optionally carries the value
/// vectors (seq_len x head_dim per head).
///
/// Immutable once constructed. The constructor checks shapes only; numeric
/// invariants are checked by validate().
class AttentionTrace {
public:
    AttentionTrace() = default;

    /// attn is indexed [layer * heads + head]; values is either empty or has
    /// the same indexing. Throws ArgumentError on any shape mismatch.
    AttentionTrace(std::size_t layers, std::size_t heads, std::size_t head_dim,
                   TokenLayout layout, std::vector<Matrix> attn,
                   std::vector<Matrix> values = {}, TraceMeta meta = {});

    std::size_t layers() const { return layers_; }
    std::size_t heads() const { return heads_; }
    std::size_t head_dim() const { return head_dim_; }
    std::size_t seq_len() const { return layout_.seq_len(); }
    const TokenLayout& layout() const { return layout_; }
    const TraceMeta& meta() const { return meta_; }
    bool has_values() const { return !values_.empty(); }

    const Matrix& attn(std::size_t layer, std::size_t head) const;
    const Matrix& values(std::size_t layer, std::size_t head) const;

    const std::vector<Matrix>& all_attn() const { return attn_; }
    const std::vector<Matrix>& all_values() const { return values_; }

    /// Rows whose sum over columns 0..=row deviates from 1 by more than
    /// kRowSumTolerance, or which contain entries outside [0, 1].
    std::vector<RowViolation> validate() const;

    /// Throws ValidationError listing the first offenders when validate() is
    /// non-empty.
    void require_valid() const;

    friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;

private:
    std::size_t layers_ = 0;
    std::size_t heads_ = 0;
    std::size_t head_dim_ = 0;
    TokenLayout layout_;
    std::vector<Matrix> attn_;
    std::vector<Matrix> values_;
    TraceMeta meta_;
};

/// Formats up to max_listed violations as "(layer, head, row) sum=..." lines.
std::string describe_violations(const std::vector<RowViolation>& violations,
                                std::size_t max_listed = 8);

} // namespace clva
