# 全局配置
