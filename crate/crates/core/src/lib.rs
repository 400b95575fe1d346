pub mod galois;
pub mod codec;
pub mod lp;
pub mod maxflow;
pub mod netmodel;
pub mod finmem;
pub mod instances;
pub mod subgraph_opt;
pub mod dist_opt;
pub mod baselines;
pub mod dynmulti;
pub mod verify;
pub mod simulator;
pub mod stats;
