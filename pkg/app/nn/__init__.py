from app.nn.module import Module, ModuleList
from app.nn.layers import Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention
