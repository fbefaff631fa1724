#include "floe/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "floe/binio.hpp"

namespace floe {

void SensorLayer::validate() const {
    const size_t n = static_cast<size_t>(h) * w;
    if (h <= 0 || w <= 0 || mean.size() != n || unc_pct.size() != n || mask.size() != n) {
        throw ShapeError("sensor layer: grids and mask must share one shape");
    }
}

Mosaic mosaic(const std::vector<SensorLayer>& layers, FuseRule rule) {
    if (layers.empty()) throw ConfigError("mosaic: empty layer list");
    for (const auto& l : layers) l.validate();
    const int h = layers[0].h, w = layers[0].w;
    for (const auto& l : layers) {
        if (l.h != h || l.w != w) throw ShapeError("mosaic: layer shapes differ");
    }
    Mosaic m;
    m.h = h;
    m.w = w;
    const size_t n = static_cast<size_t>(h) * w;
    m.mean.assign(n, kNoData);
    m.unc_pct.assign(n, kNoData);
    m.provenance.assign(n, kNoProvenance);
    for (size_t i = 0; i < n; ++i) {
        const SensorLayer* pick = nullptr;
        if (rule == FuseRule::priority) {
            for (const auto& l : layers) {
                if (l.mask[i]) {
                    pick = &l;
                    break;
                }
            }
        } else {
            for (const auto& l : layers) {
                if (l.mask[i] && (pick == nullptr || l.unc_pct[i] < pick->unc_pct[i])) pick = &l;
            }
        }
        if (pick != nullptr) {
            m.mean[i] = pick->mean[i];
            m.unc_pct[i] = pick->unc_pct[i];
            m.provenance[i] = static_cast<int8_t>(pick->sensor);
        }
    }
    return m;
}

std::vector<BinRow> bin_uncertainty(const std::vector<double>& unc_pct,
                                    const std::vector<double>& ref_sic,
                                    const std::vector<uint8_t>* mask) {
    if (unc_pct.size() != ref_sic.size() || (mask && mask->size() != ref_sic.size())) {
        throw ShapeError("bin_uncertainty: grids must share one shape");
    }
    double sums[10] = {};
    int64_t counts[10] = {};
    for (size_t i = 0; i < ref_sic.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double pct = 100.0 * ref_sic[i];
        if (!(pct >= 0.0 && pct <= 100.0)) {
            throw NumericError("bin_uncertainty: reference SIC outside [0,1]");
        }
        int b = static_cast<int>(pct / 10.0);
        if (b > 9) b = 9;  // exactly 100 goes to the closed top bin
        sums[b] += unc_pct[i];
        ++counts[b];
    }
    std::vector<BinRow> rows;
    for (int b = 0; b < 10; ++b) {
        if (counts[b] == 0) continue;  // empty bins are absent, not zero
        rows.push_back({10.0 * b, 10.0 * (b + 1), sums[b] / static_cast<double>(counts[b]), counts[b]});
    }
    return rows;
}

Accuracy accuracy(const std::vector<double>& pred, const std::vector<double>& truth,
                  const std::vector<uint8_t>* mask) {
    if (pred.size() != truth.size() || (mask && mask->size() != truth.size())) {
        throw ShapeError("accuracy: grids must share one shape");
    }
    int64_t n = 0;
    double tsum = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        tsum += truth[i];
        ++n;
    }
    if (n == 0) throw ConfigError("accuracy: empty mask");
    if (n < 2) throw ConfigError("accuracy: need at least 2 valid pixels");
    const double tmean = tsum / static_cast<double>(n);

    double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double e = pred[i] - truth[i];
        ss_res += e * e;
        ss_tot += (truth[i] - tmean) * (truth[i] - tmean);
        abs_sum += std::fabs(e);
    }
    if (!(ss_tot > 0.0)) throw ConfigError("accuracy: truth is constant, R^2 undefined");

    Accuracy a;
    a.r2 = 1.0 - ss_res / ss_tot;
    a.rmse_pct = 100.0 * std::sqrt(ss_res / static_cast<double>(n));
    a.mae_pct = 100.0 * abs_sum / static_cast<double>(n);
    return a;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream os;
    os << "method,sensor,bin_lo,bin_hi,mean_uncertainty_pct,n_pixels\n";
    for (const auto& r : rows) {
        os << to_string(r.method) << "," << to_string(r.sensor) << "," << fmt(r.bin.lo) << ","
           << fmt(r.bin.hi) << "," << fmt(r.bin.mean_uncertainty_pct) << "," << r.bin.n_pixels
           << "\n";
    }
    return os.str();
}

std::string table2_csv(const std::vector<Table2Row>& rows) {
    std::ostringstream os;
    os << "sensor,method,r2,rmse_pct,mae_pct,n_chips\n";
    for (const auto& r : rows) {
        os << to_string(r.sensor) << "," << to_string(r.method) << "," << fmt(r.acc.r2) << ","
           << fmt(r.acc.rmse_pct) << "," << fmt(r.acc.mae_pct) << "," << r.n_chips << "\n";
    }
    return os.str();
}

std::string pgm_p2(const std::vector<double>& pct, int h, int w, const std::vector<uint8_t>* valid) {
    if (pct.size() != static_cast<size_t>(h) * w || (valid && valid->size() != pct.size())) {
        throw ShapeError("pgm: grid does not match dimensions");
    }
    std::ostringstream os;
    os << "P2\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            int level;
            if (valid && !(*valid)[i]) {
                level = 255;  // reserved no-data level
            } else {
                double v = pct[i];
                if (v < 0.0) v = 0.0;
                if (v > 100.0) v = 100.0;
                level = static_cast<int>(std::lround(v / 100.0 * 254.0));
            }
            os << level << (x + 1 < w ? " " : "");
        }
        os << "\n";
    }
    return os.str();
}

void write_pgm_with_sidecar(const std::string& path, const std::vector<double>& pct, int h, int w,
                            const std::vector<uint8_t>* valid) {
    atomic_write_file(path, pgm_p2(pct, h, w, valid));
    atomic_write_file(path + ".nodata", std::string("nodata=255\n"));
}

Flow1File mosaic_to_flow1(const Mosaic& m, UqMethod method) {
    Flow1File f;
    f.kind = Flow1File::kMosaic;
    f.method = static_cast<uint8_t>(method);
    auto grid = [&](const char* name, const std::vector<double>& g) {
        Flow1NamedTensor t;
        t.name = name;
        t.dims = {m.h, m.w};
        t.data.assign(g.begin(), g.end());
        f.tensors.push_back(std::move(t));
    };
    grid("mean", m.mean);
    grid("uncertainty", m.unc_pct);
    Flow1NamedTensor prov;
    prov.name = "provenance";
    prov.dims = {m.h, m.w};
    prov.data.resize(m.provenance.size());
    for (size_t i = 0; i < prov.data.size(); ++i) prov.data[i] = static_cast<float>(m.provenance[i]);
    f.tensors.push_back(std::move(prov));
    return f;
}

Mosaic mosaic_from_flow1(const Flow1File& f) {
    if (f.kind != Flow1File::kMosaic) throw FormatError("FLOW1: not a mosaic");
    const auto& mean = f.tensor("mean");
    const auto& unc = f.tensor("uncertainty");
    const auto& prov = f.tensor("provenance");
    if (mean.dims.size() != 2 || unc.dims != mean.dims || prov.dims != mean.dims) {
        throw FormatError("FLOW1: mosaic grids must share one 2-d shape");
    }
    Mosaic m;
    m.h = static_cast<int>(mean.dims[0]);
    m.w = static_cast<int>(mean.dims[1]);
    m.mean.assign(mean.data.begin(), mean.data.end());
    m.unc_pct.assign(unc.data.begin(), unc.data.end());
    m.provenance.resize(prov.data.size());
    for (size_t i = 0; i < prov.data.size(); ++i) m.provenance[i] = static_cast<int8_t>(prov.data[i]);
    return m;
}

void save_mosaic(const std::string& path, const Mosaic& m, UqMethod method) {
    flow1_write(path, mosaic_to_flow1(m, method));
}

Mosaic load_mosaic(const std::string& path) {
    return mosaic_from_flow1(flow1_read(path));
}

}  // namespace floe
