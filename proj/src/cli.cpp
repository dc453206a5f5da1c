#include "sauvolanet/cli.hpp"

#include <atomic>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "sauvolanet/baselines.hpp"
#include "sauvolanet/checkpoint.hpp"
#include "sauvolanet/data.hpp"
#include "sauvolanet/gradcheck.hpp"
#include "sauvolanet/metrics.hpp"
#include "sauvolanet/trainer.hpp"
#include "sauvolanet/window_stats.hpp"

namespace sauvolanet {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

using Binarizer = std::function<BinaryMap(const GrayImage&, ThresholdMap*)>;

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled exactly once; the first exception is rethrown after joining.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
	threads = std::max<std::size_t>(1, std::min(threads, n));
	if (threads == 1) {
		for (std::size_t i = 0; i < n; ++i) fn(i);
		return;
	}
	std::atomic<std::size_t> next{0};
	std::exception_ptr failure;
	std::mutex failure_mutex;
	{
		std::vector<std::jthread> pool;
		for (std::size_t t = 0; t < threads; ++t) {
			pool.emplace_back([&] {
				for (std::size_t i = next++; i < n; i = next++) {
					try {
						fn(i);
					} catch (...) {
						std::lock_guard lock(failure_mutex);
						if (!failure) failure = std::current_exception();
					}
				}
			});
		}
	}
	if (failure) std::rethrow_exception(failure);
}

void write_text_atomic(const fs::path& path, const std::string& text)
{
	const fs::path tmp = path.string() + ".partial";
	{
		std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
		if (!f) throw DataError("cannot write " + path.string());
		f << text;
		if (!f.flush()) throw DataError("cannot write " + path.string());
	}
	std::error_code ec;
	fs::rename(tmp, path, ec);
	if (ec) {
		fs::remove(tmp, ec);
		throw DataError("cannot write " + path.string());
	}
}

std::vector<int> window_list(const RunConfig& cfg)
{
	return cfg.windows.empty() ? WindowSet::defaults().windows : cfg.windows;
}

template <typename Real>
Binarizer model_binarizer(std::shared_ptr<const SauvolaNet<Real>> model)
{
	return [model](const GrayImage& image, ThresholdMap* dump) {
		if (dump) *dump = predict_thresholds(image, *model);
		return f_sauvolanet(image, *model);
	};
}

Binarizer classic_binarizer(const std::vector<double>& classic)
{
	const double w = classic.at(0);
	if (w != std::floor(w)) throw UsageError("--classic window must be an integer");
	const SauvolaParams params{int(w), classic.at(1), classic.at(2)};
	validate_window(params.window);
	if (!(params.r > 0.0)) throw UsageError("--classic r must be positive");
	return [params](const GrayImage& image, ThresholdMap* dump) {
		ThresholdMap t = sauvola_threshold(image, params);
		BinaryMap out = threshold_apply(image, t);
		if (dump) *dump = std::move(t);
		return out;
	};
}

Binarizer make_binarizer(const RunConfig& cfg)
{
	if (cfg.checkpoint.has_value() == !cfg.classic.empty()) {
		throw UsageError("exactly one of --checkpoint or --classic W K R is required");
	}
	if (!cfg.classic.empty()) return classic_binarizer(cfg.classic);
	if (cfg.precision == Precision::f64) {
		return model_binarizer(std::make_shared<const SauvolaNet<double>>(load_checkpoint<double>(*cfg.checkpoint)));
	}
	return model_binarizer(std::make_shared<const SauvolaNet<float>>(load_checkpoint<float>(*cfg.checkpoint)));
}

bool same_file(const fs::path& a, const fs::path& b)
{
	std::error_code ec;
	return fs::exists(a, ec) && fs::exists(b, ec) && fs::equivalent(a, b, ec);
}

int cmd_binarize(const RunConfig& cfg, std::ostream& out)
{
	if (cfg.inputs.empty()) throw UsageError("binarize: no input images");
	for (const auto& in : cfg.inputs) {
		if (!fs::is_regular_file(in)) throw DataError("cannot read " + in.string());
	}

	struct Target {
		fs::path binary, thresholds;
	};
	std::vector<Target> targets;
	const bool single_file = cfg.inputs.size() == 1 && cfg.out && cfg.out->extension() == ".png" &&
	                         !fs::is_directory(*cfg.out);
	const fs::path dir = single_file ? cfg.out->parent_path() : cfg.out.value_or(".");
	std::set<fs::path> seen;
	for (const auto& in : cfg.inputs) {
		Target t;
		if (single_file) {
			t.binary = *cfg.out;
			t.thresholds = dir / (cfg.out->stem().string() + "_thresholds.png");
		} else {
			t.binary = dir / (in.stem().string() + "_bin.png");
			t.thresholds = dir / (in.stem().string() + "_thresholds.png");
		}
		if (!seen.insert(t.binary.lexically_normal()).second) {
			throw UsageError("two inputs map to the same output " + t.binary.string());
		}
		for (const auto& other : cfg.inputs) {
			if (same_file(other, t.binary) || (cfg.dump_thresholds && same_file(other, t.thresholds))) {
				throw UsageError("output " + t.binary.string() + " would overwrite an input");
			}
		}
		targets.push_back(std::move(t));
	}

	// Load the model before touching the output directory.
	const Binarizer binarize = make_binarizer(cfg);
	if (!dir.empty()) fs::create_directories(dir);

	std::vector<std::string> lines(cfg.inputs.size());
	parallel_for(cfg.inputs.size(), cfg.threads, [&](std::size_t i) {
		const GrayImage image = load_gray(cfg.inputs[i]);
		ThresholdMap thresholds;
		const BinaryMap map = binarize(image, cfg.dump_thresholds ? &thresholds : nullptr);
		save_binary(map, targets[i].binary);
		if (cfg.dump_thresholds) save_threshold_map(thresholds, targets[i].thresholds);
		lines[i] = cfg.inputs[i].string() + " -> " + targets[i].binary.string();
	});
	for (const auto& line : lines) out << line << '\n';
	return kExitOk;
}

std::vector<DatasetManifest> load_manifests(const std::vector<fs::path>& paths, const RunConfig& cfg)
{
	const auto root = resolve_dataset_root(cfg.dataset_root);
	std::vector<DatasetManifest> manifests;
	for (const auto& p : paths) {
		manifests.push_back(load_manifest(p, root));
		if (manifests.back().entries.empty()) throw DataError("manifest " + p.string() + " lists no images");
	}
	return manifests;
}

template <typename Real>
int train_with(const RunConfig& cfg, std::ostream& out)
{
	const auto manifests = load_manifests(cfg.manifests, cfg);
	std::vector<ImagePair> train_set;
	for (const auto& m : manifests) {
		auto pairs = load_dataset(m);
		std::move(pairs.begin(), pairs.end(), std::back_inserter(train_set));
	}
	std::vector<ImagePair> validation;
	for (const auto& m : load_manifests(cfg.validation_manifests, cfg)) {
		auto pairs = load_dataset(m);
		std::move(pairs.begin(), pairs.end(), std::back_inserter(validation));
	}

	WindowSet windows{window_list(cfg)};
	windows.validate();
	SauvolaNet<Real> model(windows, cfg.seed);

	TrainConfig tc;
	tc.steps = cfg.steps;
	tc.batch = cfg.batch;
	tc.patch = cfg.patch;
	tc.seed = cfg.seed;
	tc.learning_rate = cfg.learning_rate;
	tc.validate_every = cfg.validate_every;

	out << "training " << model.parameter_count() << " parameters on " << train_set.size() << " pages, "
	    << cfg.steps << " steps\n";
	const TrainResult result = train(train_set, model, tc, validation.empty() ? nullptr : &validation,
	                                 [&](const TrainLogRow& row) {
		                                 out << "step " << row.step << " loss " << std::fixed << std::setprecision(6)
		                                     << row.loss;
		                                 if (row.validation_fm) out << " val_fm " << *row.validation_fm;
		                                 out << std::defaultfloat << '\n';
	                                 });

	const fs::path ckpt_path = *cfg.out;
	if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
	write_checkpoint(result.checkpoint, ckpt_path);

	std::map<std::size_t, double> val;
	for (const auto& row : result.validation) val[row.step] = *row.validation_fm;
	std::ostringstream log;
	log << "step,loss,val_fm\n" << std::setprecision(9);
	for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
		log << i + 1 << ',' << result.loss_history[i] << ',';
		if (auto it = val.find(i + 1); it != val.end()) log << it->second;
		log << '\n';
	}
	write_text_atomic(cfg.log.value_or(fs::path(ckpt_path.string() + ".log.csv")), log.str());

	out << "checkpoint " << ckpt_path.string();
	if (result.best_validation_fm) out << " (best val_fm " << *result.best_validation_fm << " at step " << result.best_step << ')';
	out << '\n';
	return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out)
{
	if (cfg.manifests.empty()) throw UsageError("train: at least one --manifest is required");
	if (!cfg.out) throw UsageError("train: --out <checkpoint> is required");
	return cfg.precision == Precision::f64 ? train_with<double>(cfg, out) : train_with<float>(cfg, out);
}

ScoreReport score_manifests(const std::vector<DatasetManifest>& manifests, const Binarizer& binarize,
                            const RunConfig& cfg)
{
	struct Job {
		std::size_t fold, index;
	};
	std::vector<FoldScores> folds;
	std::vector<Job> jobs;
	for (std::size_t f = 0; f < manifests.size(); ++f) {
		folds.push_back({manifests[f].name, std::vector<ImageScore>(manifests[f].entries.size())});
		for (std::size_t i = 0; i < manifests[f].entries.size(); ++i) jobs.push_back({f, i});
	}
	parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
		const auto& entry = manifests[jobs[j].fold].entries[jobs[j].index];
		ImageScore& slot = folds[jobs[j].fold].images[jobs[j].index];
		try {
			const ImagePair pair = load_pair(entry.image, entry.truth);
			slot = score_image(pair.id, binarize(pair.image, nullptr), pair.truth, cfg.with_fps);
		} catch (const DataError& e) {
			slot.id = entry.image.stem().string();
			slot.error = e.what();
		}
	});
	return aggregate_score(folds);
}

int report_scores(const ScoreReport& report, const RunConfig& cfg, const std::string& method, std::ostream& out,
                  std::ostream& err)
{
	std::ostringstream csv;
	write_score_csv(report, csv);
	if (cfg.out) {
		if (cfg.out->has_parent_path()) fs::create_directories(cfg.out->parent_path());
		write_text_atomic(*cfg.out, csv.str());
	} else {
		out << csv.str();
	}
	for (const auto& s : report.images) {
		if (s.error) err << "warning: " << s.id << ": " << *s.error << '\n';
	}
	if (!cfg.compare.empty()) write_comparison_table(out, cfg.compare, method, report.aggregate);
	return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
	if (cfg.manifests.empty()) throw UsageError("eval: at least one --manifest is required");
	const Binarizer binarize = make_binarizer(cfg);
	const auto manifests = load_manifests(cfg.manifests, cfg);
	const std::string method = cfg.classic.empty() ? "SauvolaNet (this build)" : "Sauvola (classic)";
	return report_scores(score_manifests(manifests, binarize, cfg), cfg, method, out, err);
}

int cmd_baseline(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
	if (cfg.manifests.empty()) throw UsageError("baseline: at least one --manifest is required");
	Baseline baseline;
	try {
		baseline = parse_baseline(cfg.method);
	} catch (const std::invalid_argument& e) {
		throw UsageError(e.what());
	}
	const auto manifests = load_manifests(cfg.manifests, cfg);
	const Binarizer binarize = [baseline](const GrayImage& image, ThresholdMap*) {
		return run_baseline_on(baseline, image);
	};
	return report_scores(score_manifests(manifests, binarize, cfg), cfg, baseline_name(baseline), out, err);
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out)
{
	GradcheckConfig gc;
	gc.seed = cfg.seed;
	gc.image_size = cfg.gradcheck_size;
	gc.samples_per_group = cfg.gradcheck_samples;
	gc.windows = WindowSet{window_list(cfg)};
	gc.windows.validate();

	debug::set_gradient_fault(cfg.inject_fault);
	GradcheckReport report;
	try {
		report = run_gradcheck(gc);
	} catch (...) {
		debug::set_gradient_fault("");
		throw;
	}
	debug::set_gradient_fault("");
	write_gradcheck_report(report, out);
	return report.passed() ? kExitOk : kExitNumeric;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
	RunConfig cfg;
	CLI::App app{"Trainable multi-window Sauvola binarization"};
	app.set_config("--config", "", "Key=value configuration file; command-line flags take precedence");
	app.require_subcommand(1);
	app.fallthrough();

	std::string precision = "f32";
	std::string dataset_root;
	app.add_option("--threads", cfg.threads, "Worker threads for per-image work")->check(CLI::PositiveNumber);
	app.add_option("--precision", precision, "Model precision")->check(CLI::IsMember({"f32", "f64"}));
	app.add_option("--seed", cfg.seed, "Seed for initialization, crops and flips");
	app.add_option("--dataset-root", dataset_root, "Root for relative manifest paths (default $SAUVOLA_DATA_ROOT)");
	app.add_option("--windows", cfg.windows, "Window-size override, e.g. 7,15,23")->delimiter(',');

	std::string out_path, checkpoint_path, log_path;
	auto add_checkpoint = [&](CLI::App* sub) {
		sub->add_option("--checkpoint", checkpoint_path, "Trained model checkpoint");
		sub->add_option("--classic", cfg.classic, "Fixed Sauvola parameters W K R")->expected(3);
	};

	auto* binarize = app.add_subcommand("binarize", "Binarize images");
	binarize->add_option("inputs", cfg.inputs, "Input images")->required();
	add_checkpoint(binarize);
	binarize->add_option("--out", out_path, "Output directory, or output .png for a single input");
	binarize->add_flag("--dump-thresholds", cfg.dump_thresholds, "Also write the threshold map as 16-bit PNG");

	auto* train_cmd = app.add_subcommand("train", "Train a model");
	train_cmd->add_option("--manifest", cfg.manifests, "Training manifest (repeatable)");
	train_cmd->add_option("--val-manifest", cfg.validation_manifests, "Validation manifest (repeatable)");
	train_cmd->add_option("--steps", cfg.steps, "Optimizer steps");
	train_cmd->add_option("--batch", cfg.batch, "Crops per step")->check(CLI::PositiveNumber);
	train_cmd->add_option("--patch", cfg.patch, "Crop size")->check(CLI::PositiveNumber);
	train_cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
	train_cmd->add_option("--validate-every", cfg.validate_every, "Steps between validation passes");
	train_cmd->add_option("--out", out_path, "Checkpoint path");
	train_cmd->add_option("--log", log_path, "Training log CSV (default <checkpoint>.log.csv)");

	auto* eval = app.add_subcommand("eval", "Score a model on datasets");
	add_checkpoint(eval);
	eval->add_option("--manifest", cfg.manifests, "Dataset manifest, one fold each (repeatable)");
	eval->add_option("--out", out_path, "Score CSV (default stdout)");
	eval->add_option("--compare", cfg.compare, "Print the published table for this dataset alongside");
	eval->add_flag("--fps", cfg.with_fps, "Also report the approximate pseudo F-measure");

	auto* baseline = app.add_subcommand("baseline", "Score a fixed-parameter baseline");
	baseline->add_option("--method", cfg.method, "otsu, sauvola-opencv, sauvola-scikit or sauvola-pythreshold")
		->required();
	baseline->add_option("--manifest", cfg.manifests, "Dataset manifest, one fold each (repeatable)");
	baseline->add_option("--out", out_path, "Score CSV (default stdout)");
	baseline->add_option("--compare", cfg.compare, "Print the published table for this dataset alongside");
	baseline->add_flag("--fps", cfg.with_fps, "Also report the approximate pseudo F-measure");

	auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
	gradcheck->add_option("--size", cfg.gradcheck_size, "Side of the random test image")->check(CLI::PositiveNumber);
	gradcheck->add_option("--samples", cfg.gradcheck_samples, "Coordinates per parameter group")
		->check(CLI::PositiveNumber);
	gradcheck->add_option("--inject-fault", cfg.inject_fault)->group("");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e, out, err);
		return code == 0 ? kExitOk : kExitUsage;
	}

	cfg.subcommand = app.get_subcommands().front()->get_name();
	cfg.precision = precision == "f64" ? Precision::f64 : Precision::f32;
	if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
	if (!out_path.empty()) cfg.out = out_path;
	if (!checkpoint_path.empty()) cfg.checkpoint = checkpoint_path;
	if (!log_path.empty()) cfg.log = log_path;

	try {
		if (cfg.subcommand == "binarize") return cmd_binarize(cfg, out);
		if (cfg.subcommand == "train") {
			retain_freed_memory();
			return cmd_train(cfg, out);
		}
		if (cfg.subcommand == "eval") return cmd_eval(cfg, out, err);
		if (cfg.subcommand == "baseline") return cmd_baseline(cfg, out, err);
		return cmd_gradcheck(cfg, out);
	} catch (const UsageError& e) {
		err << "error: " << e.what() << '\n';
		return kExitUsage;
	} catch (const std::invalid_argument& e) {
		err << "error: " << e.what() << '\n';
		return kExitUsage;
	} catch (const std::exception& e) {
		err << "error: " << e.what() << '\n';
		return kExitData;
	}
}

} // namespace sauvolanet
