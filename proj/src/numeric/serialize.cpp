#include "gtee/numeric/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gtee/error.hpp"

namespace gtee::num {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
   public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

    template <typename T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == b_.size(); }

   private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw DataError("tensor file truncated at byte " + std::to_string(pos_));
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
    std::vector<std::uint8_t> out(std::begin(kTensorMagic), std::end(kTensorMagic));
    put_le<std::uint32_t>(out, kTensorFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
        out.push_back(kDtypeF64);
        for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.get_string(4) != std::string(kTensorMagic, 4)) throw DataError("tensor file: bad magic");
    if (const auto ver = r.get_le<std::uint32_t>(); ver != kTensorFormatVersion) {
        throw DataError("tensor file: unsupported version " + std::to_string(ver));
    }
    const auto count = r.get_le<std::uint32_t>();
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.get_string(r.get_le<std::uint32_t>());
        const auto ndim = r.get_le<std::uint32_t>();
        Shape shape;
        for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<std::size_t>(r.get_le<std::uint64_t>()));
        if (const auto dtype = r.get_le<std::uint8_t>(); dtype != kDtypeF64) {
            throw DataError("tensor '" + name + "': unsupported dtype tag " + std::to_string(dtype));
        }
        std::vector<double> data(numel(shape));
        for (auto& v : data) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
        out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
    }
    if (!r.done()) throw DataError("tensor file: trailing bytes after " + std::to_string(count) + " tensors");
    return out;
}

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    const auto bytes = encode_tensors(tensors);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw DataError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tensors(bytes);
}

}  // namespace gtee::num
