from .config import (
    ConvStage,
    DecoderBlock,
    EpSpec,
    NetworkConfig,
    PbepSpec,
    default_config,
    interpolate_growth,
    minimal_config,
    reduced_config,
)
from .counting import breakdown, count_macs, count_params
from .graph import (
    GraphError,
    NetworkGraph,
    backward,
    build_network,
    check_weights,
    forward,
    init_weights,
    single_layer_graph,
)
from .serialize import (
    FormatError,
    dump_config,
    load_config,
    load_weights,
    parse_config,
    save_config,
    save_weights,
)
