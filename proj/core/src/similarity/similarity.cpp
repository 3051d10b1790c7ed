#include "uapforge/similarity/similarity.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

namespace uapforge::similarity {
namespace {

void require_map(const Map& m, const char* op) {
    if (m.rank() != 2) throw ContractViolation(std::string(op) + ": expected an H x W map, got " + shape_str(m.shape()));
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double c = (double(size) - 1) / 2;
    double total = 0;
    for (std::size_t i = 0; i < size; ++i) total += w[i] = std::exp(-(double(i) - c) * (double(i) - c) / (2 * sigma * sigma));
    for (double& v : w) v /= total;
    return w;
}

// Separable "valid" filtering: output (H - k + 1) x (W - k + 1).
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
    const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> rows(h * ow);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * img[y * w + x + i];
            rows[y * ow + x] = acc;
        }
    }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    }
    return out;
}

double ssim_formula(double ma, double mb, double va, double vb, double cov, double c1, double c2) {
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

Tensor sample_slice(const Tensor& batch, std::size_t i) {
    const std::size_t per = batch.size() / batch.dim(0);
    Shape s(batch.shape().begin() + 1, batch.shape().end());
    std::vector<real> v(batch.data().begin() + std::ptrdiff_t(i * per), batch.data().begin() + std::ptrdiff_t((i + 1) * per));
    return Tensor(std::move(s), std::move(v));
}

}  // namespace

Map mean_feature_map(const Tensor& activations) {
    if (activations.rank() != 3) {
        throw ContractViolation("mean_feature_map: expected C x H x W, got " + shape_str(activations.shape()));
    }
    const std::size_t c = activations.dim(0), hw = activations.dim(1) * activations.dim(2);
    Map out({activations.dim(1), activations.dim(2)});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < hw; ++i) out[i] += double(activations[ch * hw + i]);
    }
    for (double& v : out.data()) v /= double(c);
    return out;
}

SsimResult ssim(const Map& a, const Map& b, const SsimParams& params) {
    require_map(a, "ssim");
    require_map(b, "ssim");
    if (a.shape() != b.shape()) {
        throw ContractViolation("ssim: maps differ in size: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const double c1 = (params.k1 * params.range) * (params.k1 * params.range);
    const double c2 = (params.k2 * params.range) * (params.k2 * params.range);
    const std::size_t h = a.dim(0), w = a.dim(1), n = a.size();

    if (h < params.window || w < params.window) {
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < n; ++i) ma += a[i], mb += b[i];
        ma /= double(n), mb /= double(n);
        double va = 0, vb = 0, cov = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double da = a[i] - ma, db = b[i] - mb;
            va += da * da, vb += db * db, cov += da * db;
        }
        return {ssim_formula(ma, mb, va / double(n), vb / double(n), cov / double(n), c1, c2), true};
    }

    const auto k = gaussian_window(params.window, params.sigma);
    std::vector<double> av(a.data().begin(), a.data().end()), bv(b.data().begin(), b.data().end());
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) aa[i] = av[i] * av[i], bb[i] = bv[i] * bv[i], ab[i] = av[i] * bv[i];
    const auto mu_a = filter_valid(av, h, w, k), mu_b = filter_valid(bv, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        total += ssim_formula(ma, mb, e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb, c1, c2);
    }
    return {total / double(mu_a.size()), false};
}

Map resample_map(const Map& map, std::size_t height, std::size_t width) {
    require_map(map, "resample_map");
    if (height == 0 || width == 0) throw ContractViolation("resample_map: target size must be positive");
    const std::size_t h = map.dim(0), w = map.dim(1);
    if (h == height && w == width) return map;
    Map out({height, width});
    if (h % height == 0 && w % width == 0) {
        const std::size_t fh = h / height, fw = w / width;
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                double acc = 0;
                for (std::size_t i = 0; i < fh; ++i) {
                    for (std::size_t j = 0; j < fw; ++j) acc += map[(y * fh + i) * w + x * fw + j];
                }
                out[y * width + x] = acc / double(fh * fw);
            }
        }
        return out;
    }
    auto source = [](std::size_t i, std::size_t from, std::size_t to) {
        const double s = (double(i) + 0.5) * double(from) / double(to) - 0.5;
        return std::clamp(s, 0.0, double(from - 1));
    };
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = source(y, h, height);
        const std::size_t y0 = std::size_t(sy), y1 = std::min(h - 1, y0 + 1);
        const double ty = sy - double(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = source(x, w, width);
            const std::size_t x0 = std::size_t(sx), x1 = std::min(w - 1, x0 + 1);
            const double tx = sx - double(x0);
            const double top = map[y0 * w + x0] * (1 - tx) + map[y0 * w + x1] * tx;
            const double bottom = map[y1 * w + x0] * (1 - tx) + map[y1 * w + x1] * tx;
            out[y * width + x] = top * (1 - ty) + bottom * ty;
        }
    }
    return out;
}

Map normalize_minmax(const Map& map, bool* degenerate) {
    require_map(map, "normalize_minmax");
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    const double min = *lo, span = *hi - *lo;
    if (degenerate) *degenerate = !(span > 0);
    Map out(map.shape());
    if (!(span > 0)) return out;
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - min) / span;
    return out;
}

const SimilarityRow& SimilarityReport::at(const std::string& comparison, std::size_t layer) const {
    for (const auto& r : rows) {
        if (r.comparison_arch == comparison && r.layer == layer) return r;
    }
    throw ContractViolation("similarity report: no row for " + comparison + " layer " + std::to_string(layer));
}

SimilarityReport layer_similarity_table(const zoo::Model& reference, const std::vector<const zoo::Model*>& comparisons,
                                        const data::Dataset& dataset, const std::vector<std::size_t>& layers,
                                        const SimilarityOptions& options) {
    if (dataset.empty()) throw ContractViolation("layer_similarity_table: empty dataset");
    if (layers.empty()) throw ContractViolation("layer_similarity_table: no layers requested");
    if (options.batch_size == 0) throw ContractViolation("layer_similarity_table: batch size must be positive");
    std::vector<const zoo::Model*> models{&reference};
    models.insert(models.end(), comparisons.begin(), comparisons.end());
    const std::set<std::size_t> taps(layers.begin(), layers.end());
    for (const auto* m : models) {
        if (!m->frozen()) throw ContractViolation("layer_similarity_table: model " + m->arch_id() + " must be frozen");
        if (m->input_shape() != dataset.image_shape().as_shape()) {
            throw ContractViolation("layer_similarity_table: model " + m->arch_id() + " expects " +
                                    shape_str(m->input_shape()));
        }
        if (*taps.begin() < 1 || *taps.rbegin() > m->num_taps()) {
            throw ContractViolation("layer_similarity_table: layer range exceeds the " +
                                    std::to_string(m->num_taps()) + " taps of " + m->arch_id());
        }
    }

    const std::size_t n = options.max_images ? std::min(options.max_images, dataset.size()) : dataset.size();
    const std::size_t nc = comparisons.size(), nl = layers.size();
    // Per image, comparison and layer: SSIM, degenerate flag, global flag.
    std::vector<double> scores(n * nc * nl);
    std::vector<char> degenerate(n * nc * nl), global(n * nc * nl);

    const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
    auto work = [&](std::size_t worker, std::size_t stride) {
        for (std::size_t b = worker; b < batches; b += stride) {
            const std::size_t begin = b * options.batch_size, end = std::min(n, begin + options.batch_size);
            const Tensor x = dataset.batch(begin, end);
            std::vector<std::map<std::size_t, Tensor>> acts;
            for (const auto* m : models) acts.push_back(m->inference_taps(x, taps));
            for (std::size_t i = 0; i < end - begin; ++i) {
                for (std::size_t li = 0; li < nl; ++li) {
                    bool ref_flat = false;
                    const Map ref = normalize_minmax(mean_feature_map(sample_slice(acts[0].at(layers[li]), i)), &ref_flat);
                    for (std::size_t c = 0; c < nc; ++c) {
                        bool cmp_flat = false;
                        const Map cmp =
                            normalize_minmax(mean_feature_map(sample_slice(acts[c + 1].at(layers[li]), i)), &cmp_flat);
                        const std::size_t hh = std::min(ref.dim(0), cmp.dim(0)), ww = std::min(ref.dim(1), cmp.dim(1));
                        const auto s = ssim(resample_map(ref, hh, ww), resample_map(cmp, hh, ww), options.ssim);
                        const std::size_t slot = ((begin + i) * nc + c) * nl + li;
                        scores[slot] = s.value;
                        degenerate[slot] = ref_flat || cmp_flat;
                        global[slot] = s.global_window;
                    }
                }
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, batches));
    if (jobs == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work, j, jobs);
    }

    SimilarityReport report{reference.arch_id(), dataset.fingerprint_hex(), {}};
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t li = 0; li < nl; ++li) {
            double total = 0;
            std::size_t flat = 0;
            bool any_global = false;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t slot = (i * nc + c) * nl + li;
                total += scores[slot];
                flat += degenerate[slot];
                any_global = any_global || global[slot];
            }
            report.rows.push_back({comparisons[c]->arch_id(), layers[li], total / double(n), n,
                                   double(flat) / double(n), any_global});
        }
    }
    return report;
}

std::string similarity_csv(const SimilarityReport& report) {
    std::string out = "reference_arch,comparison_arch,layer,ssim,n_images\n";
    char line[256];
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof line, "%s,%s,%zu,%.6f,%zu\n", report.reference_arch.c_str(),
                      r.comparison_arch.c_str(), r.layer, r.ssim, r.n_images);
        out += line;
    }
    return out;
}

nlohmann::json similarity_json(const SimilarityReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row = {{"comparison_arch", r.comparison_arch},
                              {"layer", r.layer},
                              {"ssim", r.ssim},
                              {"n_images", r.n_images},
                              {"degenerate_fraction", r.degenerate_fraction},
                              {"global_window", r.global_window}};
        // Constant maps in more than 1% of images make the row less telling.
        if (r.degenerate_fraction > 0.01) row["note"] = "degenerate maps in more than 1% of images";
        rows.push_back(std::move(row));
    }
    return {{"reference_arch", report.reference_arch},
            {"dataset_fingerprint", report.dataset_fingerprint},
            {"aggregation", "mean of per-image SSIM"},
            {"normalization", "min-max per map, L = 1"},
            {"resampling", "coarser grid"},
            {"rows", std::move(rows)}};
}

void write_pgm(const Map& map, const std::filesystem::path& path) {
    const Map norm = normalize_minmax(map);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_pgm: cannot open " + path.string());
    out << "P5\n" << norm.dim(1) << ' ' << norm.dim(0) << "\n255\n";
    for (double v : norm.data()) out.put(char(std::uint8_t(std::lround(v * 255))));
    if (!out) throw DataError("write_pgm: write failed for " + path.string());
}

}  // namespace uapforge::similarity
