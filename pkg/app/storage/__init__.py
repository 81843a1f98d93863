from app.storage.checkpoint import Checkpoint, check_vocab, load_checkpoint, payload_hash, save_checkpoint
