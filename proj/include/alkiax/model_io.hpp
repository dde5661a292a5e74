/*
 * Copyright 2026 The alkiax Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "alkiax/errors.hpp"
#include "alkiax/model.hpp"

namespace alkiax {

inline constexpr char kModelMagic[4] = {'A', 'L', 'K', 'X'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t Fnv1a64(const std::uint8_t *data, std::size_t size, std::uint64_t hash = 1469598103934665603ULL) {
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= data[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

namespace io {

struct VectorSink {
    std::vector<std::uint8_t> bytes;
    void Put(const std::uint8_t *p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }
};

/// Counts and hashes without storing.
struct HashSink {
    std::uint64_t hash = 1469598103934665603ULL;
    std::uint64_t size = 0;
    void Put(const std::uint8_t *p, std::size_t n) {
        hash = Fnv1a64(p, n, hash);
        size += n;
    }
};

class StreamSink {
public:
    explicit StreamSink(std::ostream &os) : os_(os) { buffer_.reserve(kChunk); }
    ~StreamSink() { Flush(); }
    StreamSink(const StreamSink &) = delete;
    StreamSink &operator=(const StreamSink &) = delete;

    void Put(const std::uint8_t *p, std::size_t n) {
        if (buffer_.size() + n > kChunk) { Flush(); }
        if (n >= kChunk) {
            os_.write(reinterpret_cast<const char *>(p), static_cast<std::streamsize>(n));
            return;
        }
        buffer_.insert(buffer_.end(), p, p + n);
    }
    void Flush() {
        if (!buffer_.empty()) {
            os_.write(reinterpret_cast<const char *>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
            buffer_.clear();
        }
    }

private:
    static constexpr std::size_t kChunk = std::size_t{1} << 20;
    std::ostream &os_;
    std::vector<std::uint8_t> buffer_;
};

/// Little-endian encoder over any sink with Put(const uint8_t*, size_t).
template <typename Sink>
class Writer {
public:
    explicit Writer(Sink &sink) : sink_(sink) {}

    void U8(std::uint8_t v) { sink_.Put(&v, 1); }
    void U32(std::uint32_t v) { Raw(v, 4); }
    void I32(std::int32_t v) { Raw(static_cast<std::uint32_t>(v), 4); }
    void U64(std::uint64_t v) { Raw(v, 8); }
    void F64(double v) { Raw(std::bit_cast<std::uint64_t>(v), 8); }
    void F64s(const std::vector<double> &v) {
        if constexpr (std::endian::native == std::endian::little) {
            sink_.Put(reinterpret_cast<const std::uint8_t *>(v.data()), v.size() * sizeof(double));
        } else {
            for (double x : v) { F64(x); }
        }
    }

private:
    void Raw(std::uint64_t v, int width) {
        std::uint8_t b[8];
        for (int i = 0; i < width; ++i) { b[i] = static_cast<std::uint8_t>(v >> (8 * i)); }
        sink_.Put(b, static_cast<std::size_t>(width));
    }
    Sink &sink_;
};

struct MemorySource {
    const std::uint8_t *data;
    std::size_t size;
    std::size_t pos = 0;
    void Get(std::uint8_t *out, std::size_t n) {
        std::memcpy(out, data + pos, n);
        pos += n;
    }
};

/// Buffered reads of a known-length region of a stream.
class StreamSource {
public:
    StreamSource(std::istream &is, std::size_t size) : is_(is), size(size) {}

    void Get(std::uint8_t *out, std::size_t n) {
        while (n > 0) {
            if (head_ == buffer_.size()) { Refill(); }
            const std::size_t take = std::min(n, buffer_.size() - head_);
            std::memcpy(out, buffer_.data() + head_, take);
            head_ += take;
            out += take;
            n -= take;
            pos += take;
        }
    }

private:
    void Refill() {
        buffer_.resize(std::min<std::size_t>(std::size_t{1} << 20, size - fetched_));
        is_.read(reinterpret_cast<char *>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
        if (is_.gcount() != static_cast<std::streamsize>(buffer_.size())) { throw CorruptModelError("model file is truncated"); }
        fetched_ += buffer_.size();
        head_ = 0;
    }
    std::istream &is_;
    std::vector<std::uint8_t> buffer_;
    std::size_t head_ = 0;
    std::size_t fetched_ = 0;

public:
    std::size_t size;
    std::size_t pos = 0;
};

/// Little-endian decoder; throws CorruptModelError when reading past the end.
template <typename Source>
class Reader {
public:
    explicit Reader(Source &src) : src_(src) {}

    std::uint8_t U8() { return static_cast<std::uint8_t>(Raw(1)); }
    std::uint32_t U32() { return static_cast<std::uint32_t>(Raw(4)); }
    std::int32_t I32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(Raw(4))); }
    std::uint64_t U64() { return Raw(8); }
    double F64() { return std::bit_cast<double>(Raw(8)); }
    void F64s(std::vector<double> &v) {
        if (remaining() / 8 < v.size()) { throw CorruptModelError("model file is truncated"); }
        if constexpr (std::endian::native == std::endian::little) {
            src_.Get(reinterpret_cast<std::uint8_t *>(v.data()), v.size() * sizeof(double));
        } else {
            for (double &x : v) { x = F64(); }
        }
    }
    [[nodiscard]] std::size_t remaining() const { return src_.size - src_.pos; }
    [[nodiscard]] std::size_t position() const { return src_.pos; }

private:
    std::uint64_t Raw(int width) {
        if (remaining() < static_cast<std::size_t>(width)) { throw CorruptModelError("model file is truncated"); }
        std::uint8_t b[8];
        src_.Get(b, static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) { v |= static_cast<std::uint64_t>(b[i]) << (8 * i); }
        return v;
    }
    Source &src_;
};

template <typename Sink>
inline void WriteNode(const PartitionTree &tree, std::size_t id, Writer<Sink> &w) {
    const SubDomain &node = tree.nodes()[id];
    w.U8(static_cast<std::uint8_t>(node.status));
    w.U32(static_cast<std::uint32_t>(node.depth));
    for (std::uint64_t i : node.index) { w.U64(i); }
    if (node.status == SubDomainStatus::Approximated) {
        const LeafData &leaf = tree.leaves()[node.leaf];
        w.I32(leaf.p);
        for (double m : leaf.mean) { w.F64(m); }
        w.F64s(leaf.weights);
    } else if (node.status == SubDomainStatus::Split) {
        const std::size_t count = std::size_t{1} << tree.dim();
        for (std::size_t c = 0; c < count; ++c) { WriteNode(tree, node.first_child + c, w); }
    }
}

struct LoadContext {
    int n;
    int nu;
    int p_lo;
    int p_hi;
};

template <typename Source>
inline void ReadNode(Reader<Source> &r, PartitionTree &tree, std::size_t id, const LoadContext &ctx) {
    const auto status = static_cast<SubDomainStatus>(r.U8());
    const auto depth = static_cast<int>(r.U32());
    const SubDomain &expect = tree.nodes()[id];
    if (depth != expect.depth) { throw InvariantViolationError("node depth does not match its position in the tree"); }
    for (int d = 0; d < ctx.n; ++d) {
        if (r.U64() != expect.index[static_cast<std::size_t>(d)]) {
            throw InvariantViolationError("node origin does not tile its parent");
        }
    }
    switch (status) {
        case SubDomainStatus::Approximated: {
            LeafData leaf;
            leaf.p = r.I32();
            if (leaf.p < ctx.p_lo || leaf.p > ctx.p_hi) { throw InvariantViolationError("leaf grid exponent outside [p_lo, p_hi]"); }
            if (depth + leaf.p > kCoordBits) { throw InvariantViolationError("leaf resolution exceeds coordinate precision"); }
            leaf.mean.resize(static_cast<std::size_t>(ctx.nu));
            for (double &m : leaf.mean) { m = r.F64(); }
            const std::size_t count = IPow(std::size_t{1} << leaf.p, ctx.n) * static_cast<std::size_t>(ctx.nu) *
                                      (std::size_t{1} << ctx.n);
            if (r.remaining() / 8 < count) { throw CorruptModelError("model file is truncated"); }
            leaf.weights.resize(count);
            r.F64s(leaf.weights);
            tree.AttachLeaf(id, std::move(leaf));
            break;
        }
        case SubDomainStatus::Infeasible: tree.MarkInfeasible(id); break;
        case SubDomainStatus::Split: {
            if (depth + 1 > kCoordBits) { throw InvariantViolationError("tree is deeper than coordinate precision"); }
            const std::size_t first = tree.SplitNode(id);
            const std::size_t count = std::size_t{1} << ctx.n;
            for (std::size_t c = 0; c < count; ++c) { ReadNode(r, tree, first + c, ctx); }
            break;
        }
        default: throw InvariantViolationError("node has an invalid status");
    }
}

}  // namespace io

namespace io {

template <typename Sink>
inline void WriteBody(const Model &model, Sink &sink) {
    Writer<Sink> w(sink);
    w.U32(static_cast<std::uint32_t>(model.input_dim()));
    w.U32(static_cast<std::uint32_t>(model.output_dim()));
    WriteNode(model.tree(), 0, w);
}

template <typename Sink>
inline void WriteHeader(const Model &model, const HashSink &body, Sink &sink) {
    Writer<Sink> w(sink);
    for (char c : kModelMagic) { w.U8(static_cast<std::uint8_t>(c)); }
    w.U32(kModelFormatVersion);
    w.U32(static_cast<std::uint32_t>(model.input_dim()));
    w.U32(static_cast<std::uint32_t>(model.output_dim()));
    w.U64(body.size);
    w.U64(body.hash);
    w.U64(model.build_digest());
    w.U32(static_cast<std::uint32_t>(model.kernel().family()));
    w.F64(model.kernel().nu());
    w.F64(model.kernel().length_scale());
    w.F64(model.epsilon());
    w.I32(model.p_lo());
    w.I32(model.p_hi());
    for (double v : model.transform().lower()) { w.F64(v); }
    for (double v : model.transform().upper()) { w.F64(v); }
}

struct Header {
    int n = 0;
    int nu = 0;
    std::uint64_t body_size = 0;
    std::uint64_t checksum = 0;
    std::uint64_t digest = 0;
    std::uint32_t family = 0;
    double nu_stored = 0.0;
    double length = 0.0;
    double epsilon = 0.0;
    int p_lo = 0;
    int p_hi = 0;
    std::vector<double> lower;
    std::vector<double> upper;
};

/// Magic and version first so foreign files fail with the right error before anything else.
template <typename Source>
inline Header ReadHeader(Reader<Source> &r, std::size_t total_size) {
    for (char c : kModelMagic) {
        if (r.U8() != static_cast<std::uint8_t>(c)) { throw ModelFormatError("not an alkiax model file (bad magic)"); }
    }
    const std::uint32_t version = r.U32();
    if (version != kModelFormatVersion) {
        throw VersionMismatchError("model format version " + std::to_string(version) + " is not supported (expected " +
                                   std::to_string(kModelFormatVersion) + ")");
    }
    Header h;
    h.n = static_cast<int>(r.U32());
    h.nu = static_cast<int>(r.U32());
    h.body_size = r.U64();
    h.checksum = r.U64();
    h.digest = r.U64();
    if (h.body_size > total_size - r.position()) { throw CorruptModelError("model file is truncated"); }
    return h;
}

template <typename Source>
inline void ReadHeaderRest(Reader<Source> &r, Header &h) {
    if (h.n < 1 || h.n > kMaxDim) { throw InvariantViolationError("input dimension out of range"); }
    if (h.nu < 1) { throw InvariantViolationError("output dimension must be positive"); }
    h.family = r.U32();
    h.nu_stored = r.F64();
    h.length = r.F64();
    h.epsilon = r.F64();
    h.p_lo = r.I32();
    h.p_hi = r.I32();
    h.lower.resize(static_cast<std::size_t>(h.n));
    h.upper.resize(static_cast<std::size_t>(h.n));
    for (double &v : h.lower) { v = r.F64(); }
    for (double &v : h.upper) { v = r.F64(); }
}

template <typename Source>
inline Model BuildModel(const Header &h, Reader<Source> &b) {
    if (static_cast<int>(b.U32()) != h.n || static_cast<int>(b.U32()) != h.nu) {
        throw InvariantViolationError("header dimensions do not match the body");
    }
    if (h.family > static_cast<std::uint32_t>(KernelFamily::Matern52)) { throw InvariantViolationError("unknown kernel family"); }
    Kernel kernel = [&] {
        try {
            return Kernel(static_cast<KernelFamily>(h.family), h.length);
        } catch (const Error &e) {
            throw InvariantViolationError(std::string("invalid kernel: ") + e.what());
        }
    }();
    if (kernel.nu() != h.nu_stored) { throw InvariantViolationError("kernel smoothness does not match its family"); }
    if (!(h.epsilon > 0.0) || h.p_lo < 1 || h.p_hi <= h.p_lo) { throw InvariantViolationError("invalid approximation parameters"); }
    DomainTransform transform = [&] {
        try {
            return DomainTransform(h.lower, h.upper);
        } catch (const Error &e) {
            throw InvariantViolationError(std::string("invalid domain: ") + e.what());
        }
    }();
    PartitionTree tree(h.n);
    ReadNode(b, tree, 0, {h.n, h.nu, h.p_lo, h.p_hi});
    if (b.remaining() != 0) { throw InvariantViolationError("trailing bytes after the last node"); }
    Model model(std::move(tree), kernel, h.epsilon, h.p_lo, h.p_hi, std::move(transform), h.nu);
    model.set_build_digest(h.digest);
    return model;
}

}  // namespace io

/// Serialized bytes of a model: fixed header followed by a checksummed body.
inline std::vector<std::uint8_t> SerializeModel(const Model &model) {
    io::VectorSink body;
    io::WriteBody(model, body);
    io::HashSink hash;
    hash.Put(body.bytes.data(), body.bytes.size());
    io::VectorSink out;
    io::WriteHeader(model, hash, out);
    out.Put(body.bytes.data(), body.bytes.size());
    return std::move(out.bytes);
}

inline Model DeserializeModel(const std::vector<std::uint8_t> &bytes) {
    io::MemorySource src{bytes.data(), bytes.size()};
    io::Reader r(src);
    io::Header h = io::ReadHeader(r, bytes.size());
    const std::size_t body_offset = bytes.size() - static_cast<std::size_t>(h.body_size);
    if (Fnv1a64(bytes.data() + body_offset, static_cast<std::size_t>(h.body_size)) != h.checksum) {
        throw CorruptModelError("model body checksum mismatch");
    }
    if (body_offset < r.position()) { throw CorruptModelError("model header length does not match its body size"); }
    io::MemorySource body{bytes.data() + body_offset, static_cast<std::size_t>(h.body_size)};
    io::Reader b(body);
    io::ReadHeaderRest(r, h);
    if (r.position() != body_offset) { throw CorruptModelError("model header length does not match its body size"); }
    return io::BuildModel(h, b);
}

/// Writes in two passes (hash, then stream) so large models are never copied into memory.
inline void save(const Model &model, const std::string &path) {
    io::HashSink hash;
    io::WriteBody(model, hash);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) { throw Error("cannot open " + path + " for writing"); }
    {
        io::StreamSink sink(out);
        io::WriteHeader(model, hash, sink);
        io::WriteBody(model, sink);
    }
    out.flush();
    if (!out) { throw Error("failed writing " + path); }
}

inline Model load(const std::string &path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) { throw Error("cannot open " + path); }
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    io::StreamSource head_src(in, size);
    io::Reader r(head_src);
    io::Header h = io::ReadHeader(r, size);
    const std::size_t body_offset = size - static_cast<std::size_t>(h.body_size);
    if (body_offset < r.position()) { throw CorruptModelError("model header length does not match its body size"); }
    {
        std::ifstream scan(path, std::ios::binary);
        scan.seekg(static_cast<std::streamoff>(body_offset));
        std::vector<char> chunk(std::size_t{1} << 20);
        std::uint64_t hash = 1469598103934665603ULL;
        std::size_t left = static_cast<std::size_t>(h.body_size);
        while (left > 0) {
            const std::size_t take = std::min(left, chunk.size());
            scan.read(chunk.data(), static_cast<std::streamsize>(take));
            if (scan.gcount() != static_cast<std::streamsize>(take)) { throw CorruptModelError("model file is truncated"); }
            hash = Fnv1a64(reinterpret_cast<const std::uint8_t *>(chunk.data()), take, hash);
            left -= take;
        }
        if (hash != h.checksum) { throw CorruptModelError("model body checksum mismatch"); }
    }
    io::ReadHeaderRest(r, h);
    if (r.position() != body_offset) { throw CorruptModelError("model header length does not match its body size"); }
    std::ifstream body_in(path, std::ios::binary);
    body_in.seekg(static_cast<std::streamoff>(body_offset));
    io::StreamSource body_src(body_in, static_cast<std::size_t>(h.body_size));
    io::Reader b(body_src);
    return io::BuildModel(h, b);
}

}  // namespace alkiax
