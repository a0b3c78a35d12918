from .forkchoice import (FIRST_SEEN, UNIFORM, EmptyView, KConfirmations, MostWork,
                         QuorumCommit, final_tip, finality_k_confirmations,
                         fork_choice_most_work, prefer)
from .ibft import IbftMessage, ibft_proposer, ibft_step, ibft_valid
from .nakamoto import ZeroHashPower, nakamoto_make_block, nakamoto_next_mining_time
