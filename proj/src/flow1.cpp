#include "floe/flow1.hpp"

namespace floe {

std::vector<uint8_t> flow1_encode(const Flow1File& f) {
    ByteWriter w;
    w.bytes("FLOW1", 5);
    w.u8(f.kind);
    switch (f.kind) {
        case Flow1File::kModel:
            w.u8(f.mode);
            w.u8(f.sensor);
            w.f32(f.dropout_p);
            w.u32(f.in_channels);
            w.u32(f.chip_side);
            w.u32(f.token_grid);
            w.u32(f.patch_side);
            w.u32(f.hidden);
            w.u32(f.heads);
            w.u32(f.repeats);
            w.u8(f.residual);
            w.u8(f.layer_norm);
            break;
        case Flow1File::kField:
            w.u8(f.method);
            w.u8(f.sensor);
            w.u32(f.samples);
            w.u64(f.seed);
            break;
        case Flow1File::kMosaic:
            w.u8(f.method);
            break;
        default:
            throw FormatError("FLOW1: unknown kind " + std::to_string(f.kind));
    }
    w.u32(static_cast<uint32_t>(f.tensors.size()));
    for (const auto& t : f.tensors) {
        if (t.dims.empty()) throw FormatError("FLOW1: tensor " + t.name + " has no dims");
        int64_t n = 1;
        for (int64_t d : t.dims) n *= d;
        if (n != static_cast<int64_t>(t.data.size())) {
            throw FormatError("FLOW1: tensor " + t.name + " dims do not match data length");
        }
        w.str(t.name);
        w.u32(static_cast<uint32_t>(t.dims.size()));
        for (int64_t d : t.dims) w.u32(static_cast<uint32_t>(d));
        w.f32_array(t.data);
    }
    return w.data();
}

Flow1File flow1_decode(const std::vector<uint8_t>& bytes, const std::string& what) {
    ByteReader r(bytes.data(), bytes.size(), what);
    r.expect_magic("FLOW1");
    Flow1File f;
    f.kind = r.u8();
    switch (f.kind) {
        case Flow1File::kModel:
            f.mode = r.u8();
            f.sensor = r.u8();
            f.dropout_p = r.f32();
            f.in_channels = r.u32();
            f.chip_side = r.u32();
            f.token_grid = r.u32();
            f.patch_side = r.u32();
            f.hidden = r.u32();
            f.heads = r.u32();
            f.repeats = r.u32();
            f.residual = r.u8();
            f.layer_norm = r.u8();
            break;
        case Flow1File::kField:
            f.method = r.u8();
            f.sensor = r.u8();
            f.samples = r.u32();
            f.seed = r.u64();
            break;
        case Flow1File::kMosaic:
            f.method = r.u8();
            break;
        default:
            throw FormatError(what + ": unknown FLOW1 kind " + std::to_string(f.kind));
    }
    const uint32_t n_tensors = r.u32();
    f.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        Flow1NamedTensor t;
        t.name = r.str();
        const uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError(what + ": implausible tensor rank");
        int64_t n = 1;
        t.dims.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            t.dims[d] = static_cast<int64_t>(r.u32());
            if (t.dims[d] <= 0) throw FormatError(what + ": non-positive dimension");
            n *= t.dims[d];
        }
        if (static_cast<uint64_t>(n) * 4 > r.remaining()) {
            throw FormatError(what + ": truncated file");
        }
        t.data = r.f32_array(static_cast<size_t>(n));
        f.tensors.push_back(std::move(t));
    }
    r.expect_end();
    return f;
}

void flow1_write(const std::string& path, const Flow1File& f) {
    atomic_write_file(path, flow1_encode(f));
}

Flow1File flow1_read(const std::string& path) {
    return flow1_decode(read_file_bytes(path), path);
}

}  // namespace floe
