#include "srcd/model.hpp"

#include "srcd/checkpoint.hpp"

namespace srcd {

Batch make_batch(std::span<const data::PatchPair> pairs) {
  require(!pairs.empty(), "cannot build an empty batch");
  std::vector<torch::Tensor> t1, t2, lr, bic, gt;
  for (const auto& p : pairs) {
    t1.push_back(p.hr_t1);
    t2.push_back(p.hr_t2);
    lr.push_back(p.lr_t2);
    bic.push_back(p.bicubic_t2);
    gt.push_back(p.gt);
  }
  return {torch::stack(t1), torch::stack(t2), torch::stack(lr), torch::stack(bic), torch::stack(gt)};
}

sr::GeneratorConfig generator_config(const train::ExperimentConfig& config) {
  return {config.scale(), config.gen_channels, config.gen_residual_blocks};
}

sr::DiscriminatorConfig discriminator_config(const train::ExperimentConfig& config) {
  return {config.disc_channels, config.disc_dense_units};
}

cd::CdConfig cd_config(const train::ExperimentConfig& config) {
  return {config.cd_width, config.use_sam, config.cd_reduction};
}

SrcdNet SrcdNet::create(const train::ExperimentConfig& config) {
  auto cfg = config;
  cfg.normalize();
  cfg.validate();
  torch::manual_seed(cfg.seed);
  SrcdNet net;
  net.scale = cfg.scale();
  net.use_srm = cfg.use_srm;
  if (net.use_srm) {
    net.generator = sr::Generator(generator_config(cfg));
    net.discriminator = sr::Discriminator(discriminator_config(cfg));
  }
  net.change_net = cd::ChangeNet(cd_config(cfg));
  if (!cfg.pretrained_extractor.empty()) load_pretrained_extractor(net.change_net, cfg.pretrained_extractor);
  return net;
}

void SrcdNet::set_training(bool training) {
  if (generator) generator->train(training);
  if (discriminator) discriminator->train(training);
  change_net->train(training);
}

torch::Tensor SrcdNet::t2_input(const Batch& batch) {
  if (use_srm) return generator->forward(batch.lr_t2);
  return scale == 1 ? batch.hr_t2 : batch.bicubic_t2;
}

torch::Tensor SrcdNet::distance(const Batch& batch) {
  return change_net->forward(batch.hr_t1, t2_input(batch));
}

void SrcdNet::save(const std::filesystem::path& dir) const {
  if (use_srm) {
    io::save_checkpoint(dir / "generator.ckpt",
                        {"generator", generator->config().to_json(), io::module_state(*generator)});
    io::save_checkpoint(dir / "discriminator.ckpt", {"discriminator", discriminator->config().to_json(),
                                                     io::module_state(*discriminator)});
  }
  io::save_checkpoint(dir / "change_net.ckpt",
                      {"change_net", change_net->config().to_json(), io::module_state(*change_net)});
}

SrcdNet SrcdNet::load(const std::filesystem::path& dir, const train::ExperimentConfig& config) {
  auto cfg = config;
  cfg.pretrained_extractor.clear();
  auto net = create(cfg);
  auto load_one = [&dir](const char* file, const char* kind, torch::nn::Module& module,
                         const nlohmann::json& expected_meta) {
    const auto ckpt = io::load_checkpoint(dir / file);
    if (ckpt.kind != kind) throw CheckpointError(std::string(file) + " holds a '" + ckpt.kind + "' checkpoint");
    if (ckpt.meta != expected_meta) {
      throw CheckpointError(std::string(file) + " was saved with " + ckpt.meta.dump() +
                            " but the config expects " + expected_meta.dump());
    }
    io::load_module_state(module, ckpt);
  };
  if (net.use_srm) {
    load_one("generator.ckpt", "generator", *net.generator, net.generator->config().to_json());
    load_one("discriminator.ckpt", "discriminator", *net.discriminator,
             net.discriminator->config().to_json());
  }
  load_one("change_net.ckpt", "change_net", *net.change_net, net.change_net->config().to_json());
  return net;
}

void load_pretrained_extractor(cd::ChangeNet& net, const std::filesystem::path& path) {
  io::load_module_state(*net->extractor(), io::load_checkpoint(path));
}

}  // namespace srcd
