"""trapkit: copyright trap generation, injection and detection via
black-box membership inference."""

from .errors import (CapabilityError, InputError, IntegrityError,
                     TransportError, TrapkitError)
from .provider import (Provider, ProviderConfig, RemoteProvider, TokenScores,
                       TokenSequence, derive_seed)
from .toylm import (BuiltinProvider, NGramModel, ProviderSnapshot, load_model,
                    save_model, train)
from .trapgen import (BucketSpec, TrapSequence, bucket_of, generate_synthetic,
                      load_traps, matched_quotas, sample_real, save_traps)
from .injector import InjectionRecord, emit_html_trap, inject, strip
from .mia import (AttackScore, MembershipRecord, doc_min_k, loss_attack,
                  min_k_prob, ratio_attack, ratio_with_context,
                  ratio_with_random_context)
from .evaluate import (EvaluationReport, auc, bootstrap_auc_ci, bucketed_auc,
                       checkpoint_curve, pearson_perm, threshold_max_accuracy)
from .dupscan import DuplicateWindow, find_duplicates, perplexity_by_repetition
from .corpus import DocumentRecord, ExperimentManifest, ingest, split_roles

__version__ = "0.1.0"
