// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace clva {

/// Half-open index range [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }

    friend bool operator==(const Span&, const Span&) = default;
};

/// Token layout of a multimodal prompt: [system | visual | text].
///
/// The three spans are contiguous and partition [0, seq_len). The visual and
/// text spans are never empty; the system span may be.
class TokenLayout {
public:
    TokenLayout() = default;

    const Span& sys() const { return sys_; }
    const Span& vis() const { return vis_; }
    const Span& txt() const { return txt_; }
    std::size_t seq_len() const { return txt_.end; }

    /// Number of visual tokens.
    std::size_t n_vis() const { return vis_.size(); }

    /// True for system and text positions, i.e. everything that is not visual.
    bool is_linguistic(std::size_t j) const { return !vis_.contains(j); }

    friend bool operator==(const TokenLayout&, const TokenLayout&) = default;

    friend TokenLayout build_layout(std::size_t, std::size_t, std::size_t);

private:
    Span sys_;
    Span vis_;
    Span txt_;
};

/// Builds the layout for n_sys system, n_vis visual, and n_txt text tokens.
/// Throws LayoutError when n_vis or n_txt is zero.
TokenLayout build_layout(std::size_t n_sys, std::size_t n_vis, std::size_t n_txt);

} // namespace clva
