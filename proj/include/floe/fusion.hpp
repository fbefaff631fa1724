#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "floe/flow1.hpp"
#include "floe/types.hpp"
#include "floe/uq.hpp"

namespace floe {

// One sensor's contribution to the mosaic. Pixels outside the validity mask
// carry kNoData and are excluded from every statistic.
struct SensorLayer {
    Sensor sensor = Sensor::sentinel1;
    int h = 0, w = 0;
    std::vector<double> mean;     // SIC fraction
    std::vector<double> unc_pct;  // uncertainty in percentage points
    std::vector<uint8_t> mask;    // 1 = covered

    void validate() const;
};

inline constexpr double kNoData = -1.0;
inline constexpr int8_t kNoProvenance = -1;

struct Mosaic {
    int h = 0, w = 0;
    std::vector<double> mean;
    std::vector<double> unc_pct;
    std::vector<int8_t> provenance;  // Sensor code of the supplying layer, or kNoProvenance
};

enum class FuseRule {
    priority,            // first covering layer wins (list order)
    lowest_uncertainty,  // covering layer with the smallest uncertainty wins
};

// Decision-level fusion. Default is strict priority layering in list order;
// the selected layer supplies mean, uncertainty and provenance unchanged.
Mosaic mosaic(const std::vector<SensorLayer>& layers, FuseRule rule = FuseRule::priority);

// Ten SIC bins: [0,10), [10,20), ..., [80,90), [90,100]. Left-closed, final
// bin closed at the top. Empty bins are absent from the result.
struct BinRow {
    double lo = 0.0, hi = 0.0;          // percent
    double mean_uncertainty_pct = 0.0;
    int64_t n_pixels = 0;
};

std::vector<BinRow> bin_uncertainty(const std::vector<double>& unc_pct,
                                    const std::vector<double>& ref_sic,
                                    const std::vector<uint8_t>* mask = nullptr);

inline std::vector<BinRow> bin_uncertainty(const UncertaintyField& field,
                                           const std::vector<double>& ref_sic,
                                           const std::vector<uint8_t>* mask = nullptr) {
    return bin_uncertainty(field.uncertainty_pct(), ref_sic, mask);
}

struct Accuracy {
    double r2 = 0.0;
    double rmse_pct = 0.0;
    double mae_pct = 0.0;
};

// R^2 = 1 - SS_res/SS_tot over masked pixels; RMSE/MAE in SIC percentage
// points. Inputs are SIC fractions.
Accuracy accuracy(const std::vector<double>& pred, const std::vector<double>& truth,
                  const std::vector<uint8_t>* mask = nullptr);

// ---------------------------------------------------------------------------
// Report formats
// ---------------------------------------------------------------------------

struct Table1Row {
    UqMethod method;
    Sensor sensor;
    BinRow bin;
};

struct Table2Row {
    Sensor sensor;
    UqMethod method;
    Accuracy acc;
    int n_chips = 0;
};

std::string table1_csv(const std::vector<Table1Row>& rows);
std::string table2_csv(const std::vector<Table2Row>& rows);

// Plain-text graymap (P2). Values are SIC-style percentages mapped onto
// 0..254; no-data pixels get the reserved level 255, recorded in a one-line
// sidecar next to the image.
std::string pgm_p2(const std::vector<double>& pct, int h, int w,
                   const std::vector<uint8_t>* valid = nullptr);
void write_pgm_with_sidecar(const std::string& path, const std::vector<double>& pct, int h, int w,
                            const std::vector<uint8_t>* valid = nullptr);

// FLOW1 persistence for mosaics (kind 2: tensors mean/uncertainty/provenance).
Flow1File mosaic_to_flow1(const Mosaic& m, UqMethod method);
Mosaic mosaic_from_flow1(const Flow1File& f);
void save_mosaic(const std::string& path, const Mosaic& m, UqMethod method);
Mosaic load_mosaic(const std::string& path);

}  // namespace floe
