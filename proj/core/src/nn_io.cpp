#include <string>

#include "boundcf/errors.hpp"
#include "boundcf/nn.hpp"
#include "json_codec.hpp"

namespace boundcf::detail {

json vector_to_json(const nn::Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

nn::Vector vector_from_json(const json& doc) {
  if (!doc.is_array()) throw ValidationError("expected a numeric array");
  nn::Vector v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) v(static_cast<Eigen::Index>(i)) = doc[i].get<double>();
  return v;
}

json network_to_json(const nn::Network& network) {
  json doc;
  doc["format"] = "boundcf-network";
  doc["version"] = 1;
  doc["seed"] = network.seed();
  doc["input_dim"] = network.input_dim();
  doc["output_dim"] = network.output_dim();
  json layers = json::array();
  for (const auto& layer : network.layers()) {
    json l;
    l["in_dim"] = layer.in_dim();
    l["out_dim"] = layer.out_dim();
    l["activation"] = nn::activation_name(layer.activation.kind);
    l["activation_param"] = layer.activation.param;
    l["l2_factor"] = layer.l2_factor;
    l["dropout_rate"] = layer.dropout_rate;
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
    l["weights"] = std::move(w);
    l["biases"] = vector_to_json(layer.biases);
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  return doc;
}

nn::Network network_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "boundcf-network") {
      throw ValidationError("not a network document");
    }
    std::vector<nn::DenseLayer> layers;
    for (const auto& l : doc.at("layers")) {
      const auto in = l.at("in_dim").get<std::size_t>();
      const auto out = l.at("out_dim").get<std::size_t>();
      nn::DenseLayer layer;
      layer.activation = nn::parse_activation(l.at("activation").get<std::string>(),
                                              l.at("activation_param").get<double>());
      layer.l2_factor = l.at("l2_factor").get<double>();
      layer.dropout_rate = l.at("dropout_rate").get<double>();
      const auto& w = l.at("weights");
      if (w.size() != in * out) throw ValidationError("weight array has wrong length");
      layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = w[i++].get<double>();
      layer.biases = vector_from_json(l.at("biases"));
      layers.push_back(std::move(layer));
    }
    nn::Network net(std::move(layers), doc.value("seed", std::uint64_t{0}));
    if (net.input_dim() != doc.at("input_dim").get<std::size_t>() ||
        net.output_dim() != doc.at("output_dim").get<std::size_t>()) {
      throw ValidationError("declared dims disagree with layer shapes");
    }
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace boundcf::detail

namespace boundcf::nn {

std::string save_network(const Network& network) {
  return detail::dump(detail::network_to_json(network));
}

Network load_network(std::string_view document) {
  detail::json doc;
  try {
    doc = detail::json::parse(document);
  } catch (const detail::json::exception& e) {
    throw ValidationError(std::string("network document is not valid JSON: ") + e.what());
  }
  return detail::network_from_json(doc);
}

}  // namespace boundcf::nn
