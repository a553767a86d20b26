#include "cli.hpp"

#include "bbox/bench.hpp"
#include "bbox/codecs.hpp"
#include "bbox/error.hpp"
#include "bbox/format.hpp"
#include "bbox/reader.hpp"
#include "bbox/sample.hpp"
#include "bbox/writer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

namespace bbox::cli {

namespace {

using nlohmann::json;

unsigned default_workers() {
    if (const char* env = std::getenv("BBOX_WORKERS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0 && v < 4096) {
            return static_cast<unsigned>(v);
        }
    }
    return 1;
}

// Usage errors detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string kind_with_params(const FieldDescriptor& f) {
    std::ostringstream os;
    os << kind_name(f.kind);
    if (f.kind == FieldKind::FixedArray) {
        const auto& a = std::get<ArrayParams>(f.params);
        os << " dtype=" << static_cast<int>(a.dtype) << " dims=";
        for (std::uint8_t d = 0; d < a.ndims; ++d) {
            os << (d ? "x" : "") << a.dims[d];
        }
    } else if (f.kind == FieldKind::Image) {
        const auto& p = f.image();
        os << " max=" << p.max_height << "x" << p.max_width << "x" << int{p.channels};
    }
    return os.str();
}

json cell_json(const FieldDescriptor& f, const Cell& c) {
    json j{{"name", f.name}, {"kind", kind_name(f.kind)}};
    switch (f.kind) {
    case FieldKind::IntScalar: j["value"] = std::get<std::int64_t>(c); break;
    case FieldKind::FloatScalar: j["value"] = std::get<double>(c); break;
    case FieldKind::FixedArray:
        j["offset"] = std::get<ArrayRef>(c).offset;
        j["length"] = std::get<ArrayParams>(f.params).byte_length();
        break;
    case FieldKind::VarBytes:
        j["offset"] = std::get<BytesRef>(c).offset;
        j["length"] = std::get<BytesRef>(c).length;
        break;
    case FieldKind::Image: {
        const auto& r = std::get<ImageRef>(c);
        j["offset"] = r.offset;
        j["length"] = r.length;
        j["height"] = r.height;
        j["width"] = r.width;
        j["channels"] = r.channels;
        j["codec"] = codec_name(r.codec);
        break;
    }
    }
    return j;
}

void print_flat(std::ostream& out, const json& j, const std::vector<std::string>& keys) {
    bool first = true;
    for (const auto& k : keys) {
        if (!j.contains(k)) {
            continue;
        }
        out << (first ? "" : " ") << k << "=";
        if (j[k].is_string()) {
            out << j[k].get<std::string>();
        } else {
            out << j[k].dump();
        }
        first = false;
    }
}

//------------------------------------------------------------------------------

// Container rows as a sample source, for exporting a file tree.
class DatasetSource final : public SampleSource {
public:
    explicit DatasetSource(const std::filesystem::path& path) : ds_(path) {}
    const Schema& schema() const override { return ds_.schema(); }
    std::uint64_t size() const override { return ds_.num_samples(); }
    Sample get(std::uint64_t index) const override { return ds_.get_sample(index); }

private:
    Dataset ds_;
};

std::unique_ptr<SampleSource> open_source(const std::string& from, std::uint64_t seed) {
    if (from.rfind("synthetic:", 0) == 0) {
        SyntheticSpec spec = parse_synthetic_spec(from);
        spec.seed = seed;
        return std::make_unique<SyntheticSource>(spec);
    }
    if (std::filesystem::is_directory(from)) {
        return std::make_unique<DirectorySource>(from);
    }
    if (std::filesystem::is_regular_file(from)) {
        return std::make_unique<DatasetSource>(from);
    }
    fail(Errc::SourceError, "no such source: " + from);
}

//------------------------------------------------------------------------------

struct CreateArgs {
    std::string from, out;
    std::uint64_t page_size = kDefaultPageSize;
    unsigned workers = 1;
    double compress_prob = 0.0;
    std::string codec = "rle";
    std::uint64_t seed = 0;
    bool json = false;
};

int cmd_create(const CreateArgs& a, std::ostream& out) {
    WriterConfig cfg;
    cfg.page_size = a.page_size;
    cfg.num_encode_workers = a.workers;
    cfg.compress_probability = a.compress_prob;
    cfg.seed = a.seed;
    if (a.codec == "rle") {
        cfg.compressed_codec = CodecId::Rle;
    } else if (a.codec == "subsample2") {
        cfg.compressed_codec = CodecId::Subsample2;
    } else {
        throw UsageError("--codec must be rle or subsample2");
    }
    try {
        check_writer_config(cfg);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    auto source = open_source(a.from, a.seed);
    const WriteReport r = write_dataset(*source, cfg, a.out);
    json j{{"path", a.out},
           {"samples", r.num_samples},
           {"pages", r.num_pages},
           {"bytes", r.bytes_written},
           {"page_size", cfg.page_size},
           {"waste_fraction", r.waste_fraction},
           {"codec_raw", r.codec_counts[0]},
           {"codec_rle", r.codec_counts[1]},
           {"codec_subsample2", r.codec_counts[2]}};
    if (a.json) {
        out << j.dump(2) << "\n";
    } else {
        out << "wrote " << a.out << "\n";
        for (const char* k : {"samples", "pages", "page_size", "bytes", "waste_fraction", "codec_raw",
                              "codec_rle", "codec_subsample2"}) {
            out << k << " " << j[k].dump() << "\n";
        }
    }
    return kOk;
}

int cmd_inspect(const std::string& path, std::optional<std::uint64_t> sample, bool as_json, std::ostream& out) {
    Dataset ds(path);
    const DatasetHeader& h = ds.header();
    json j{{"path", path},
           {"version", h.format_version},
           {"num_samples", h.num_samples},
           {"page_size", h.page_size},
           {"num_pages", ds.num_pages()},
           {"num_fields", h.fields.size()},
           {"data_table_offset", h.data_table_offset},
           {"heap_offset", h.heap_offset},
           {"alloc_table_offset", h.alloc_table_offset},
           {"regions", ds.regions().size()}};
    json fields = json::array();
    for (const auto& f : h.fields) {
        fields.push_back({{"name", f.name}, {"kind", kind_with_params(f)}, {"cell_width", f.row_cell_width()}});
    }
    j["fields"] = fields;
    if (sample) {
        const std::vector<Cell> cells = ds.row(*sample);
        json row = json::array();
        for (std::size_t f = 0; f < cells.size(); ++f) {
            row.push_back(cell_json(h.fields[f], cells[f]));
        }
        j["sample"] = {{"index", *sample}, {"cells", row}};
    }
    if (as_json) {
        out << j.dump(2) << "\n";
        return kOk;
    }
    for (const char* k : {"path", "version", "num_samples", "page_size", "num_pages", "num_fields",
                          "data_table_offset", "heap_offset", "alloc_table_offset", "regions"}) {
        out << k << " " << (j[k].is_string() ? j[k].get<std::string>() : j[k].dump()) << "\n";
    }
    for (std::size_t f = 0; f < h.fields.size(); ++f) {
        out << "field " << f << " " << h.fields[f].name << " " << kind_with_params(h.fields[f]) << "\n";
    }
    if (sample) {
        out << "sample " << *sample << "\n";
        for (const auto& c : j["sample"]["cells"]) {
            out << "  ";
            print_flat(out, c, {"name", "kind", "value", "offset", "length", "height", "width", "channels", "codec"});
            out << "\n";
        }
    }
    return kOk;
}

int cmd_validate(const std::string& path, bool as_json, std::ostream& out) {
    const ValidationReport r = validate_file(path);
    if (as_json) {
        json v = json::array();
        for (const auto& x : r.violations) {
            v.push_back({{"kind", x.kind}, {"detail", x.detail}});
        }
        out << json{{"path", path}, {"ok", r.ok()}, {"violations", v}}.dump(2) << "\n";
    } else if (r.ok()) {
        out << "ok " << path << "\n";
    } else {
        for (const auto& x : r.violations) {
            out << "violation " << x.kind << ": " << x.detail << "\n";
        }
        out << r.violations.size() << " violation(s)\n";
    }
    return r.ok() ? kOk : kDataError;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h = (h ^ b) * 0x100000001b3ULL;
    }
    return h;
}

int cmd_dump(const std::string& path, std::uint64_t index, const std::string& raster_out, bool as_json,
             std::ostream& out) {
    Dataset ds(path);
    const Sample s = ds.get_sample(index);
    json fields = json::array();
    const ImageValue* first_image = nullptr;
    for (std::size_t f = 0; f < s.size(); ++f) {
        const FieldDescriptor& d = ds.schema()[f];
        json j{{"name", d.name}, {"kind", kind_name(d.kind)}};
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, double>) {
                    j["value"] = v;
                } else if constexpr (std::is_same_v<T, ImageValue>) {
                    j["height"] = v.height;
                    j["width"] = v.width;
                    j["channels"] = v.channels;
                    j["fnv1a"] = fnv1a(v.pixels);
                    if (!first_image) {
                        first_image = &v;
                    }
                } else {
                    std::ostringstream hex;
                    const std::size_t n = std::min<std::size_t>(v.data.size(), 32);
                    for (std::size_t i = 0; i < n; ++i) {
                        static const char* digits = "0123456789abcdef";
                        const auto b = static_cast<unsigned>(v.data[i]);
                        hex << digits[b >> 4] << digits[b & 15];
                    }
                    j["length"] = v.data.size();
                    j["head"] = hex.str();
                }
            },
            s[f]);
        fields.push_back(j);
    }
    if (!raster_out.empty()) {
        if (!first_image) {
            fail(Errc::SchemaMismatch, "sample has no image field");
        }
        write_raster(raster_out, *first_image);
    }
    if (as_json) {
        out << json{{"index", index}, {"fields", fields}}.dump(2) << "\n";
        return kOk;
    }
    out << "sample " << index << "\n";
    for (const auto& j : fields) {
        out << "  ";
        print_flat(out, j, {"name", "kind", "value", "length", "head", "height", "width", "channels", "fnv1a"});
        out << "\n";
    }
    return kOk;
}

struct BenchArgs {
    std::string data, tree, mode = "read-process", loader = "container", order = "random";
    std::string pipeline = "decode|flip:0.5|normalize:127.5,64", read_mode = "process-cache", out;
    std::int64_t latency_us = 0, compute_us = 0;
    unsigned repetitions = 3, workers = 1, batch_size = 64;
    std::uint64_t seed = 0, cache_pages = 0;
    bool json = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    BenchScenario s;
    BenchInputs in;
    try {
        s.mode = parse_bench_mode(a.mode);
        s.loader = parse_loader_kind(a.loader);
        s.order = parse_order_kind(a.order);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (a.read_mode == "os-cache") {
        s.read_mode = ReadMode::OsCache;
    } else if (a.read_mode == "direct") {
        s.read_mode = ReadMode::Direct;
    } else if (a.read_mode == "process-cache") {
        s.read_mode = ReadMode::ProcessCache;
    } else {
        throw UsageError("--read-mode must be os-cache, direct or process-cache");
    }
    if (s.loader == LoaderKind::FilePerSample && a.tree.empty()) {
        throw UsageError("--loader file-per-sample needs --tree DIR");
    }
    if (s.loader == LoaderKind::Container && a.data.empty()) {
        throw UsageError("--loader container needs --data FILE");
    }
    if (a.latency_us < 0 || a.compute_us < 0) {
        throw UsageError("durations must be non-negative");
    }
    s.read_latency = std::chrono::microseconds(a.latency_us);
    s.compute_per_batch = std::chrono::microseconds(a.compute_us);
    s.repetitions = a.repetitions;
    s.num_workers = a.workers;
    s.batch_size = a.batch_size;
    s.seed = a.seed;
    s.pipeline = a.pipeline;
    s.cache_pages = a.cache_pages;
    try {
        check_scenario(s);
        parse_pipeline(s.pipeline);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    in.container = a.data;
    in.tree = a.tree;
    const BenchReport report = run_scenario(s, in);
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        f << report.to_json().dump(2) << "\n";
        if (!f) {
            fail(Errc::Io, "cannot write " + a.out);
        }
    }
    out << (a.json ? report.to_json().dump(2) + "\n" : report.to_text());
    return kOk;
}

int cmd_export_tree(const std::string& from, const std::string& out_dir, std::uint64_t seed, std::ostream& out) {
    auto source = open_source(from, seed);
    export_tree(*source, out_dir);
    out << "exported " << source->size() << " samples to " << out_dir << "\n";
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Paged container dataset tool", "bbox"};
    app.require_subcommand(1);

    CreateArgs create;
    create.workers = default_workers();
    auto* c = app.add_subcommand("create", "Pack a source into a container file");
    c->add_option("--from", create.from, "Source: directory tree, synthetic:NxHxWxC, or a container")->required();
    c->add_option("--out", create.out, "Output file")->required();
    c->add_option("--page-size", create.page_size, "Page size in bytes (power of two, >= 65536)");
    c->add_option("--workers", create.workers, "Encode workers (default BBOX_WORKERS or 1)");
    c->add_option("--compress-prob", create.compress_prob, "Probability of compressing an image");
    c->add_option("--codec", create.codec, "Codec for compressed images: rle or subsample2");
    c->add_option("--seed", create.seed, "Seed");
    c->add_flag("--json", create.json, "Machine-readable output");

    std::string inspect_path;
    std::optional<std::uint64_t> inspect_sample;
    bool inspect_json = false;
    auto* i = app.add_subcommand("inspect", "Print header and (optionally) one row");
    i->add_option("path", inspect_path, "Container file")->required();
    i->add_option("--sample", inspect_sample, "Row index");
    i->add_flag("--json", inspect_json, "Machine-readable output");

    std::string validate_path;
    bool validate_json = false;
    auto* v = app.add_subcommand("validate", "Check every structural invariant");
    v->add_option("path", validate_path, "Container file")->required();
    v->add_flag("--json", validate_json, "Machine-readable output");

    std::string dump_path, dump_raster;
    std::uint64_t dump_index = 0;
    bool dump_json = false;
    auto* d = app.add_subcommand("sample-dump", "Decode one sample");
    d->alias("dump");
    d->add_option("path", dump_path, "Container file")->required();
    d->add_option("--sample", dump_index, "Row index")->required();
    d->add_option("--raster-out", dump_raster, "Write the first image field as a raster file");
    d->add_flag("--json", dump_json, "Machine-readable output");

    BenchArgs bench;
    bench.workers = default_workers();
    auto* b = app.add_subcommand("bench", "Run a loading benchmark scenario");
    b->add_option("--data", bench.data, "Container file");
    b->add_option("--tree", bench.tree, "Directory tree for the file-per-sample loader");
    b->add_option("--mode", bench.mode, "read-only, read-process or full-loop");
    b->add_option("--loader", bench.loader, "container or file-per-sample");
    b->add_option("--latency-us", bench.latency_us, "Injected latency per physical read");
    b->add_option("--compute-us", bench.compute_us, "Synthetic compute per batch (full-loop)");
    b->add_option("--repetitions", bench.repetitions, "Runs; the median is reported (>= 3)");
    b->add_option("--workers", bench.workers, "Loader workers (default BBOX_WORKERS or 1)");
    b->add_option("--batch-size", bench.batch_size, "Batch size");
    b->add_option("--order", bench.order, "sequential, random or quasi-random");
    b->add_option("--seed", bench.seed, "Seed");
    b->add_option("--pipeline", bench.pipeline, "Transform pipeline, e.g. decode|crop:32,32|flip:0.5");
    b->add_option("--read-mode", bench.read_mode, "os-cache, direct or process-cache");
    b->add_option("--cache-pages", bench.cache_pages, "Process cache capacity (0: automatic)");
    b->add_option("--out", bench.out, "Write the JSON report here");
    b->add_flag("--json", bench.json, "Print JSON instead of text");

    std::string export_from, export_out;
    std::uint64_t export_seed = 0;
    auto* e = app.add_subcommand("export-tree", "Write a source as one raster file per sample");
    e->add_option("--from", export_from, "synthetic:NxHxWxC or a container file")->required();
    e->add_option("--out", export_out, "Output directory")->required();
    e->add_option("--seed", export_seed, "Seed for synthetic sources");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kUsageError;
    }

    try {
        if (c->parsed()) return cmd_create(create, out);
        if (i->parsed()) return cmd_inspect(inspect_path, inspect_sample, inspect_json, out);
        if (v->parsed()) return cmd_validate(validate_path, validate_json, out);
        if (d->parsed()) return cmd_dump(dump_path, dump_index, dump_raster, dump_json, out);
        if (b->parsed()) return cmd_bench(bench, out);
        if (e->parsed()) return cmd_export_tree(export_from, export_out, export_seed, out);
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return kUsageError;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return kDataError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kDataError;
    }
    err << app.help();
    return kUsageError;
}

} // namespace bbox::cli
