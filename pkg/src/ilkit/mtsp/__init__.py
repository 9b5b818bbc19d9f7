"""Min-max multi-agent TSP with a learned allocation and a control-variate hypergradient."""

from .instance import (
    InstanceFormatError,
    MtspInstance,
    dumps_instance,
    load_instance,
    loads_instance,
    random_mtsp,
    save_instance,
)
from .nets import (
    allocation_logits,
    allocation_probs,
    city_features,
    init_allocation_net,
    init_surrogate_net,
    surrogate_coefficients,
)
from .train import (
    IMtspConfig,
    IMtspResult,
    MtspEval,
    MtspGrad,
    MtspHistoryRow,
    evaluate_allocation,
    greedy_assignment,
    imtsp_grad,
    imtsp_train,
    sample_allocations,
    write_mtsp_csv,
)
from .tsp import (
    AgentTour,
    allocation_cost,
    allocation_tours,
    angular_sector_assignment,
    brute_force_tsp,
    minmax_cost,
    route_length,
    tsp_solve,
    two_opt_deltas,
)

__all__ = [name for name in dir() if not name.startswith("_")]
