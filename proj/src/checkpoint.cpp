#include "glsgn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace glsgn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'L', 'S', 'G'};

class Writer {
public:
    template <typename I>
    void integer(I v) {
        char buf[sizeof(I)];
        std::memcpy(buf, &v, sizeof(I));
        out_.append(buf, sizeof(I));
    }
    void string(const std::string& s) {
        integer<uint32_t>(uint32_t(s.size()));
        out_ += s;
    }
    void raw(const char* p, size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    void need(size_t n, const char* what) const {
        if (in_.size() - pos_ < n)
            fail(ErrorCode::CorruptCheckpoint, std::string("checkpoint truncated while reading ") + what);
    }
    template <typename I>
    I integer(const char* what) {
        need(sizeof(I), what);
        I v;
        std::memcpy(&v, in_.data() + pos_, sizeof(I));
        pos_ += sizeof(I);
        return v;
    }
    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string string(const char* what) { return bytes(integer<uint32_t>(what), what); }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::string& in_;
    size_t pos_ = 0;
};

size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
    return sizeof(T) == 4 ? DType::F32 : DType::F64;
}

} // namespace

template <typename T>
NamedTensor NamedTensor::from(const std::string& name, const Tensor<T>& t) {
    NamedTensor n;
    n.name = name;
    n.dtype = dtype_of<T>();
    n.shape = t.shape();
    n.payload.assign(reinterpret_cast<const char*>(t.values().data()), t.values().size() * sizeof(T));
    return n;
}

template <typename T>
Tensor<T> NamedTensor::to() const {
    require(dtype == dtype_of<T>(), ErrorCode::CorruptCheckpoint, "checkpoint tensor " + name + " has the wrong dtype");
    Tensor<T> t(shape);
    require(payload.size() == t.values().size() * sizeof(T), ErrorCode::CorruptCheckpoint,
            "checkpoint tensor " + name + " payload does not match its shape");
    std::memcpy(t.values().data(), payload.data(), payload.size());
    return t;
}

const NamedTensor* CheckpointFile::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name)
            return &t;
    return nullptr;
}

std::string encode_checkpoint(const CheckpointFile& ckpt) {
    Writer w;
    w.raw(kMagic, 4);
    w.integer<uint32_t>(ckpt.version);
    w.string(ckpt.config_json);
    w.integer<uint64_t>(ckpt.seed);
    w.integer<int64_t>(ckpt.step);
    w.integer<uint32_t>(uint32_t(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.string(t.name);
        w.integer<uint8_t>(uint8_t(t.dtype));
        w.integer<uint32_t>(uint32_t(t.shape.size()));
        for (int d : t.shape) w.integer<int32_t>(d);
        w.integer<uint64_t>(t.payload.size());
        w.raw(t.payload.data(), t.payload.size());
    }
    return w.take();
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(4 <= bytes.size() ? 4 : bytes.size(), "magic") != std::string(kMagic, 4))
        fail(ErrorCode::CorruptCheckpoint, "not a checkpoint (bad magic)");
    CheckpointFile c;
    c.version = r.integer<uint32_t>("version");
    if (c.version != CheckpointFile::kVersion)
        fail(ErrorCode::CorruptCheckpoint, "unsupported checkpoint version " + std::to_string(c.version));
    c.config_json = r.string("config");
    c.seed = r.integer<uint64_t>("seed");
    c.step = r.integer<int64_t>("step");
    const uint32_t count = r.integer<uint32_t>("tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.string("tensor name");
        const uint8_t dt = r.integer<uint8_t>("dtype");
        if (dt != uint8_t(DType::F32) && dt != uint8_t(DType::F64))
            fail(ErrorCode::CorruptCheckpoint, "tensor " + t.name + ": unknown dtype");
        t.dtype = DType(dt);
        const uint32_t rank = r.integer<uint32_t>("rank");
        if (rank > 8)
            fail(ErrorCode::CorruptCheckpoint, "tensor " + t.name + ": implausible rank");
        int64_t numel = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            const int32_t d = r.integer<int32_t>("shape");
            if (d < 0)
                fail(ErrorCode::CorruptCheckpoint, "tensor " + t.name + ": negative dimension");
            t.shape.push_back(d);
            numel *= d;
        }
        const uint64_t n = r.integer<uint64_t>("payload size");
        if (n != uint64_t(numel) * dtype_size(t.dtype))
            fail(ErrorCode::CorruptCheckpoint, "tensor " + t.name + ": payload size does not match shape");
        t.payload = r.bytes(size_t(n), "payload");
        c.tensors.push_back(std::move(t));
    }
    if (!r.done())
        fail(ErrorCode::CorruptCheckpoint, "trailing bytes after checkpoint");
    return c;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out)
        fail(ErrorCode::Io, "cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template NamedTensor NamedTensor::from<float>(const std::string&, const Tensor<float>&);
template NamedTensor NamedTensor::from<double>(const std::string&, const Tensor<double>&);
template Tensor<float> NamedTensor::to<float>() const;
template Tensor<double> NamedTensor::to<double>() const;

} // namespace glsgn
