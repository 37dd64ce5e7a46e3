// SPDX-License-Identifier: Apache-2.0

#include "clva/trace.hpp"

#include "clva/errors.hpp"

#include <cmath>
#include <sstream>

namespace clva {

AttentionTrace::AttentionTrace(std::size_t layers, std::size_t heads, std::size_t head_dim,
                               TokenLayout layout, std::vector<Matrix> attn,
                               std::vector<Matrix> values, TraceMeta meta)
    : layers_(layers),
      heads_(heads),
      head_dim_(head_dim),
      layout_(layout),
      attn_(std::move(attn)),
      values_(std::move(values)),
      meta_(std::move(meta)) {
    if (layers_ == 0 || heads_ == 0) {
        throw ArgumentError("trace: layers and heads must be positive");
    }
    if (layout_.seq_len() == 0) {
        throw ArgumentError("trace: layout is empty");
    }
    const std::size_t s = layout_.seq_len();
    if (attn_.size() != layers_ * heads_) {
        throw ArgumentError("trace: expected " + std::to_string(layers_ * heads_) +
                            " attention matrices, got " + std::to_string(attn_.size()));
    }
    for (const auto& m : attn_) {
        if (m.rows() != s || m.cols() != s) {
            throw ArgumentError("trace: attention matrix is not seq_len x seq_len");
        }
    }
    if (!values_.empty()) {
        if (values_.size() != layers_ * heads_) {
            throw ArgumentError("trace: value matrix count does not match layers x heads");
        }
        for (const auto& m : values_) {
            if (m.rows() != s || m.cols() != head_dim_) {
                throw ArgumentError("trace: value matrix is not seq_len x head_dim");
            }
        }
    }
}

const Matrix& AttentionTrace::attn(std::size_t layer, std::size_t head) const {
    if (layer >= layers_ || head >= heads_) {
        throw ArgumentError("trace: (layer " + std::to_string(layer) + ", head " +
                            std::to_string(head) + ") out of range");
    }
    return attn_[layer * heads_ + head];
}

const Matrix& AttentionTrace::values(std::size_t layer, std::size_t head) const {
    if (values_.empty()) {
        throw ArgumentError("trace: no value payload recorded");
    }
    if (layer >= layers_ || head >= heads_) {
        throw ArgumentError("trace: (layer " + std::to_string(layer) + ", head " +
                            std::to_string(head) + ") out of range");
    }
    return values_[layer * heads_ + head];
}

std::vector<RowViolation> AttentionTrace::validate() const {
    std::vector<RowViolation> out;
    const std::size_t s = seq_len();
    for (std::size_t l = 0; l < layers_; ++l) {
        for (std::size_t h = 0; h < heads_; ++h) {
            const Matrix& a = attn_[l * heads_ + h];
            for (std::size_t i = 0; i < s; ++i) {
                double sum = 0.0;
                bool out_of_range = false;
                for (std::size_t j = 0; j < s; ++j) {
                    const double v = a(i, j);
                    if (!(v >= 0.0 && v <= 1.0)) {
                        out_of_range = true;
                    }
                    if (j <= i) {
                        sum += v;
                    }
                }
                if (out_of_range || !(std::abs(sum - 1.0) <= kRowSumTolerance)) {
                    out.push_back({l, h, i, sum, out_of_range});
                }
            }
        }
    }
    return out;
}

void AttentionTrace::require_valid() const {
    auto violations = validate();
    if (!violations.empty()) {
        throw ValidationError("trace validation failed:\n" + describe_violations(violations));
    }
}

std::string describe_violations(const std::vector<RowViolation>& violations,
                                std::size_t max_listed) {
    std::ostringstream os;
    os << violations.size() << " offending row(s)";
    std::size_t listed = 0;
    for (const auto& v : violations) {
        if (listed++ == max_listed) {
            os << "\n  ...";
            break;
        }
        os << "\n  (layer " << v.layer << ", head " << v.head << ", row " << v.row
           << ") sum=" << v.row_sum;
        if (v.out_of_range) {
            os << " [entry outside [0,1]]";
        }
    }
    return os.str();
}

} // namespace clva
