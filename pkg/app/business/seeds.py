import hashlib

MASK64 = (1 << 64) - 1


def splitmix64(value):
    """splitmix64 混合函数, 输入输出均为 64 位无符号整数"""
    value = (value + 0x9E3779B97F4A7C15) & MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & MASK64
    return value ^ (value >> 31)


def _key_hash(key):
    return int.from_bytes(hashlib.sha256(str(key).encode('utf-8')).digest()[:8], 'big')


def derive_seed(parent, key):
    """
    由父种子和名字派生子种子: master -> log -> model -> metric
    按名字而非序号派生, 增加模型不会改变其他单元的随机数
    """
    return splitmix64((int(parent) & MASK64) ^ _key_hash(key))
