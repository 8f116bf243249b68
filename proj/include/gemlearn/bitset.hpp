#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace gemlearn {

/// Fixed-size bit vector over 64-bit words. Size is set at construction and
/// all binary operations require equal sizes.
class BitSet {
public:
    using Word = std::uint64_t;
    static constexpr std::size_t kWordBits = 64;

    BitSet() = default;
    explicit BitSet(std::size_t size, bool value = false)
        : size_(size), words_((size + kWordBits - 1) / kWordBits, value ? ~Word{0} : Word{0}) {
        trim();
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t word_count() const noexcept { return words_.size(); }
    const Word* data() const noexcept { return words_.data(); }

    bool test(std::size_t i) const noexcept {
        return (words_[i / kWordBits] >> (i % kWordBits)) & 1u;
    }
    void set(std::size_t i) noexcept { words_[i / kWordBits] |= Word{1} << (i % kWordBits); }
    void reset(std::size_t i) noexcept { words_[i / kWordBits] &= ~(Word{1} << (i % kWordBits)); }
    void assign(std::size_t i, bool v) noexcept { v ? set(i) : reset(i); }

    /// Sets bit i and reports whether it was previously clear.
    bool insert(std::size_t i) noexcept {
        Word& w = words_[i / kWordBits];
        const Word bit = Word{1} << (i % kWordBits);
        const bool fresh = (w & bit) == 0;
        w |= bit;
        return fresh;
    }

    void clear() noexcept {
        for (auto& w : words_) w = 0;
    }
    void fill() noexcept {
        for (auto& w : words_) w = ~Word{0};
        trim();
    }

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }
    bool none() const noexcept {
        for (auto w : words_)
            if (w) return false;
        return true;
    }
    bool any() const noexcept { return !none(); }

    bool is_subset_of(const BitSet& other) const noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & ~other.words_[i]) return false;
        return true;
    }
    bool intersects(const BitSet& other) const noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (words_[i] & other.words_[i]) return true;
        return false;
    }

    BitSet& operator|=(const BitSet& o) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
        return *this;
    }
    BitSet& operator&=(const BitSet& o) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
        return *this;
    }
    /// Clears every bit set in o.
    BitSet& subtract(const BitSet& o) noexcept {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
        return *this;
    }

    friend BitSet operator|(BitSet a, const BitSet& b) noexcept { return a |= b; }
    friend BitSet operator&(BitSet a, const BitSet& b) noexcept { return a &= b; }
    friend bool operator==(const BitSet&, const BitSet&) = default;

    /// Calls f(index) for each set bit in increasing order.
    template <class F>
    void for_each(F&& f) const {
        for (std::size_t wi = 0; wi < words_.size(); ++wi) {
            Word w = words_[wi];
            while (w) {
                const auto bit = static_cast<std::size_t>(std::countr_zero(w));
                f(wi * kWordBits + bit);
                w &= w - 1;
            }
        }
    }

    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> out;
        out.reserve(count());
        for_each([&](std::size_t i) { out.push_back(i); });
        return out;
    }

private:
    void trim() noexcept {
        const std::size_t tail = size_ % kWordBits;
        if (tail && !words_.empty()) words_.back() &= (Word{1} << tail) - 1;
    }

    std::size_t size_ = 0;
    std::vector<Word> words_;
};

}  // namespace gemlearn
