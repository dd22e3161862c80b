"""Meta-path learning on heterogeneous information networks.

A policy network walks the schema graph (entity types linked by relations)
and is rewarded by how well the meta-path it traces explains a query
relation on the instance graph.
"""
from .errors import (ConfigError, ContractError, DataError, HinError, MissingArtifactError,
                     NumericError, ParseError, ValidationError)
from .graph import (InstanceGraph, Query, SchemaGraph, TypePairSupport, add_inverse_relations,
                    derive_schema_graph, from_named, load_instance_graph, load_schema_graph, load_toy,
                    narrow_query_set, queries_for_relation, remove_entities, remove_relations,
                    remove_triples, type_pairs_for_relation)
from .metapath import (EvalCache, EvalRecord, MetaPath, arrival_indicator, confidence, connected_pairs,
                       coverage, evaluate, reward, valid_rate)
from .env import STAY, Action, SchemaEnv, State, Trajectory, trajectory_to_metapath
from .embeddings import EmbeddingTable, build_embeddings, load_embeddings, save_embeddings
from .policy import PolicyParams, RolloutBatch, policy_gradients, trajectory_log_prob_entropy
from .trainer import TrainConfig, Trainer, TrainStats, sample_queries
from .inference import MinedPathSet, QARanking, answer_query, beam_search, evaluate_qa, mine_metapaths
from .linkpred import (LPDataset, SimilarityMode, evaluate_lp, fit_l1_regression, generate_negatives,
                       pair_features, prepare_dataset)
from .baselines import SearchBudget, enumerate_metapaths, random_walk_metapaths

__version__ = "0.1.0"
